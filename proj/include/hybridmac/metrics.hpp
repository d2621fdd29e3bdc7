#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hybridmac/core.hpp"
#include "hybridmac/frame.hpp"

namespace hybridmac {

// Jain's index (Σx)² / (N Σx²).
inline double fairness_index(const std::vector<double>& x) {
  double s = 0.0, s2 = 0.0;
  for (double v : x) {
    s += v;
    s2 += v * v;
  }
  if (s <= 0.0) throw std::invalid_argument("fairness_index: shares sum to zero");
  return s * s / (static_cast<double>(x.size()) * s2);
}

// Fraction of nonempty-system slots in which a packet left the system.
inline double channel_utilization(const std::vector<std::int64_t>& backlog,
                                  const std::vector<bool>& departed) {
  std::int64_t num = 0, den = 0;
  for (std::size_t t = 0; t < backlog.size(); ++t) {
    if (backlog[t] <= 0) continue;
    ++den;
    if (departed[t]) ++num;
  }
  if (den == 0) throw std::invalid_argument("channel_utilization: system never nonempty");
  return static_cast<double>(num) / static_cast<double>(den);
}

struct BacklogCdf {
  std::vector<double> F;  // F[x] = P(ΣQ <= x), x = 0..support_max
  std::int64_t support_max = 0;

  double at(std::int64_t x) const {
    if (x < 0) return 0.0;
    if (x >= static_cast<std::int64_t>(F.size())) return 1.0;
    return F[static_cast<std::size_t>(x)];
  }
};

inline BacklogCdf cdf_from_histogram(const std::vector<std::int64_t>& hist) {
  BacklogCdf c;
  std::int64_t total = 0;
  for (auto h : hist) total += h;
  if (total == 0) throw std::invalid_argument("backlog_cdf: empty trace");
  std::int64_t top = static_cast<std::int64_t>(hist.size()) - 1;
  while (top > 0 && hist[static_cast<std::size_t>(top)] == 0) --top;
  c.support_max = top;
  c.F.resize(static_cast<std::size_t>(top + 1));
  std::int64_t acc = 0;
  for (std::int64_t x = 0; x <= top; ++x) {
    acc += hist[static_cast<std::size_t>(x)];
    c.F[static_cast<std::size_t>(x)] = static_cast<double>(acc) / static_cast<double>(total);
  }
  return c;
}

inline BacklogCdf backlog_cdf(const std::vector<std::int64_t>& trace) {
  std::vector<std::int64_t> hist;
  for (auto q : trace) {
    if (q < 0) throw std::invalid_argument("backlog_cdf: negative backlog");
    if (static_cast<std::size_t>(q) >= hist.size()) hist.resize(static_cast<std::size_t>(q) + 1);
    ++hist[static_cast<std::size_t>(q)];
  }
  return cdf_from_histogram(hist);
}

struct MetricsOptions {
  Slot warmup = 10000;
  Slot window = 10000;            // batch length for CIs and stability windows
  Slot jain_trace = 20000;        // J(t) recorded for this many post-warm-up slots
  bool shares_count_success_only = false;
};

struct ClassStats {
  std::int64_t count = 0;
  double sum = 0.0;
  double sumsq = 0.0;

  void add(double d) {
    ++count;
    sum += d;
    sumsq += d * d;
  }
  void merge(const ClassStats& o) {
    count += o.count;
    sum += o.sum;
    sumsq += o.sumsq;
  }
  double mean() const {
    if (count == 0) throw std::logic_error("mean delay: no departures recorded");
    return sum / static_cast<double>(count);
  }
};

class MetricsAccumulator {
 public:
  MetricsAccumulator(int n, MetricsOptions opt = {}) : n_(n), opt_(opt) {
    shares_.assign(static_cast<std::size_t>(n), 0);
    per_queue_.assign(static_cast<std::size_t>(n), ClassStats{});
  }

  const MetricsOptions& options() const { return opt_; }
  int n() const { return n_; }

  // backlog: total backlog at t+ (after arrivals, before the departure).
  void observe(Slot t, std::int64_t backlog, std::int64_t arrivals, const SlotOutcome& out,
               const std::optional<Packet>& departed) {
    if (t < opt_.warmup) return;
    const Slot rel = t - opt_.warmup;
    ++slots_;
    backlog_sum_ += static_cast<double>(backlog);
    arrivals_ += arrivals;
    if (static_cast<std::size_t>(backlog) >= hist_.size())
      hist_.resize(static_cast<std::size_t>(backlog) + 1, 0);
    ++hist_[static_cast<std::size_t>(backlog)];
    const double x = static_cast<double>(rel), y = static_cast<double>(backlog);
    sx_ += x;
    sxx_ += x * x;
    sy_ += y;
    sxy_ += x * y;

    const auto w = static_cast<std::size_t>(rel / opt_.window);
    if (w >= win_backlog_.size()) {
      win_backlog_.resize(w + 1, 0.0);
      win_slots_.resize(w + 1, 0);
      win_delay_.resize(w + 1, 0.0);
      win_departures_.resize(w + 1, 0);
    }
    win_backlog_[w] += y;
    ++win_slots_[w];

    if (backlog > 0) {
      ++util_den_;
      if (departed) ++util_num_;
    }
    if (departed) {
      const double d = static_cast<double>(packet_delay(*departed, t));
      (departed->cls == PacketClass::alarm ? alarm_ : data_).add(d);
      per_queue_[static_cast<std::size_t>(departed->queue)].add(d);
      win_delay_[w] += d;
      ++win_departures_[w];
    }

    std::optional<int> who = opt_.shares_count_success_only
                                 ? (departed ? std::optional<int>(departed->queue) : std::nullopt)
                                 : out.scheduled;
    if (who) {
      auto& c = shares_[static_cast<std::size_t>(*who)];
      share_sq_ += static_cast<double>(2 * c + 1);
      ++c;
      share_sum_ += 1.0;
    }
    if (rel < opt_.jain_trace) jain_.push_back(current_jain());
  }

  void merge(const MetricsAccumulator& o) {
    slots_ += o.slots_;
    backlog_sum_ += o.backlog_sum_;
    arrivals_ += o.arrivals_;
    if (o.hist_.size() > hist_.size()) hist_.resize(o.hist_.size(), 0);
    for (std::size_t i = 0; i < o.hist_.size(); ++i) hist_[i] += o.hist_[i];
    util_num_ += o.util_num_;
    util_den_ += o.util_den_;
    data_.merge(o.data_);
    alarm_.merge(o.alarm_);
    for (std::size_t i = 0; i < per_queue_.size(); ++i) per_queue_[i].merge(o.per_queue_[i]);
    // Batches of the other run are appended as further batches.
    for (std::size_t i = 0; i < o.win_backlog_.size(); ++i) {
      win_backlog_.push_back(o.win_backlog_[i]);
      win_slots_.push_back(o.win_slots_[i]);
      win_delay_.push_back(o.win_delay_[i]);
      win_departures_.push_back(o.win_departures_[i]);
    }
    for (std::size_t i = 0; i < shares_.size(); ++i) shares_[i] += o.shares_[i];
    share_sum_ = 0.0;
    share_sq_ = 0.0;
    for (auto c : shares_) {
      share_sum_ += static_cast<double>(c);
      share_sq_ += static_cast<double>(c) * static_cast<double>(c);
    }
    // Ensemble average of the fairness traces.
    const std::size_t len = std::min(jain_.size(), o.jain_.size());
    const double a = static_cast<double>(merged_), b = static_cast<double>(o.merged_);
    for (std::size_t i = 0; i < len; ++i) jain_[i] = (a * jain_[i] + b * o.jain_[i]) / (a + b);
    jain_.resize(len);
    merged_ += o.merged_;
    sx_ = sxx_ = sy_ = sxy_ = std::nan("");
  }

  Slot slots() const { return slots_; }
  std::int64_t departures() const { return data_.count + alarm_.count; }

  double mean_delay() const {
    ClassStats all = data_;
    all.merge(alarm_);
    return all.mean();
  }
  double mean_delay(PacketClass c) const {
    return (c == PacketClass::alarm ? alarm_ : data_).mean();
  }
  bool has_class(PacketClass c) const {
    return (c == PacketClass::alarm ? alarm_ : data_).count > 0;
  }
  double queue_delay(int i) const { return per_queue_[static_cast<std::size_t>(i)].mean(); }
  bool has_queue_delay(int i) const { return per_queue_[static_cast<std::size_t>(i)].count > 0; }

  // Half-width of a 95% interval from batch means over windows.
  std::optional<double> delay_ci() const {
    std::vector<double> means;
    for (std::size_t w = 0; w < win_delay_.size(); ++w)
      if (win_departures_[w] > 0 && win_slots_[w] == opt_.window)
        means.push_back(win_delay_[w] / static_cast<double>(win_departures_[w]));
    if (means.size() < 2) return std::nullopt;
    double m = 0.0;
    for (double v : means) m += v;
    m /= static_cast<double>(means.size());
    double var = 0.0;
    for (double v : means) var += (v - m) * (v - m);
    var /= static_cast<double>(means.size() - 1);
    return 1.96 * std::sqrt(var / static_cast<double>(means.size()));
  }

  double mean_backlog() const {
    if (slots_ == 0) throw std::logic_error("mean backlog: no slots recorded");
    return backlog_sum_ / static_cast<double>(slots_);
  }

  // Time-average total backlog divided by the nominal total rate.
  double little_law_delay(double total_rate) const { return mean_backlog() / total_rate; }

  // Same, with the arrival count actually observed in the window.
  double little_law_delay_empirical() const {
    if (arrivals_ == 0) throw std::logic_error("little's law: no arrivals");
    return backlog_sum_ / static_cast<double>(arrivals_);
  }

  double backlog_sum() const { return backlog_sum_; }
  std::int64_t arrivals() const { return arrivals_; }
  double delay_sum() const { return data_.sum + alarm_.sum; }

  std::optional<double> zeta() const {
    if (util_den_ == 0) return std::nullopt;
    return static_cast<double>(util_num_) / static_cast<double>(util_den_);
  }

  std::vector<double> shares() const {
    std::vector<double> x(shares_.size());
    const double total = share_sum_ > 0 ? share_sum_ : 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(shares_[i]) / total;
    return x;
  }

  std::optional<double> jain_final() const {
    if (share_sum_ <= 0) return std::nullopt;
    return current_jain();
  }
  const std::vector<double>& jain_trace() const { return jain_; }

  BacklogCdf cdf() const { return cdf_from_histogram(hist_); }
  const std::vector<std::int64_t>& histogram() const { return hist_; }

  std::vector<double> window_means() const {
    std::vector<double> m;
    for (std::size_t w = 0; w < win_backlog_.size(); ++w)
      if (win_slots_[w] > 0) m.push_back(win_backlog_[w] / static_cast<double>(win_slots_[w]));
    return m;
  }

  // Least-squares slope of total backlog against time (packets/slot).
  double backlog_slope() const {
    const double n = static_cast<double>(slots_);
    const double den = n * sxx_ - sx_ * sx_;
    if (slots_ < 2 || den == 0.0) return 0.0;
    return (n * sxy_ - sx_ * sy_) / den;
  }

 private:
  double current_jain() const {
    if (share_sum_ <= 0) return 0.0;
    return share_sum_ * share_sum_ / (static_cast<double>(n_) * share_sq_);
  }

  int n_;
  MetricsOptions opt_;
  Slot slots_ = 0;
  double backlog_sum_ = 0.0;
  std::int64_t arrivals_ = 0;
  std::vector<std::int64_t> hist_;
  double sx_ = 0, sxx_ = 0, sy_ = 0, sxy_ = 0;
  std::vector<double> win_backlog_;
  std::vector<Slot> win_slots_;
  std::vector<double> win_delay_;
  std::vector<std::int64_t> win_departures_;
  std::int64_t util_num_ = 0, util_den_ = 0;
  ClassStats data_, alarm_;
  std::vector<ClassStats> per_queue_;
  std::vector<std::int64_t> shares_;
  double share_sum_ = 0.0, share_sq_ = 0.0;
  std::vector<double> jain_;
  std::int64_t merged_ = 1;
};

}  // namespace hybridmac
