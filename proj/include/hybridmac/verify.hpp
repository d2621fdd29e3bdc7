#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hybridmac/run.hpp"

namespace hybridmac {

// Mean delay of the batch-Bernoulli single-server queue that a centralized
// scheduler with full backlog knowledge turns the network into.
inline double gxd1_delay(int n, double lambda) {
  if (n < 1 || lambda < 0.0) throw ConfigError("gxd1: need N >= 1 and lambda >= 0");
  if (n * lambda >= 1.0) throw ConfigError("gxd1: N*lambda must be below 1");
  return (2.0 - (n + 1) * lambda) / (2.0 * (1.0 - n * lambda));
}

// ---------------------------------------------------------------------------
// Truncated value iteration on the switching MDP (symmetric rates, r = 0).
//
// State: incumbent i (V_i = 0), incumbent backlog q in [0, q_max], and the
// elapsed-since-service counts of the other queues in [1, v_max]. With q > 0
// the incumbent is served (exhaustive class). At q = 0 a queue j is chosen;
// its backlog is C ~ Binomial(V_j, lambda), one packet leaves if C > 0, and the
// new incumbent backlog is (C-1)^+ + A.
// ---------------------------------------------------------------------------

struct MdpOptions {
  int n = 2;
  double lambda = 0.2;
  double alpha = 0.95;
  int q_max = 30;
  int v_max = 30;
  double tol = 1e-9;
  int max_iter = 20000;
  bool allow_stay = false;  // also minimize over j = i (idling at the empty incumbent)
};

struct ValueTable {
  MdpOptions opt;
  std::vector<double> J;
  std::vector<int> choice;  // q = 0 states only, -1 elsewhere
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  double worst_contraction = 0.0;  // max over iterations of residual ratio

  int others() const { return opt.n - 1; }

  std::size_t index(int inc, int q, const std::vector<int>& v_others) const {
    std::size_t idx = static_cast<std::size_t>(inc);
    idx = idx * static_cast<std::size_t>(opt.q_max + 1) + static_cast<std::size_t>(q);
    for (int v : v_others) idx = idx * static_cast<std::size_t>(opt.v_max) + static_cast<std::size_t>(v - 1);
    return idx;
  }

  std::size_t size() const {
    std::size_t s = static_cast<std::size_t>(opt.n) * static_cast<std::size_t>(opt.q_max + 1);
    for (int k = 0; k < others(); ++k) s *= static_cast<std::size_t>(opt.v_max);
    return s;
  }

  // Full V vector (length n) stored in a state with incumbent inc.
  std::vector<int> full_v(int inc, const std::vector<int>& v_others) const {
    std::vector<int> v(static_cast<std::size_t>(opt.n), 0);
    int k = 0;
    for (int j = 0; j < opt.n; ++j)
      if (j != inc) v[static_cast<std::size_t>(j)] = v_others[static_cast<std::size_t>(k++)];
    return v;
  }

  std::vector<int> others_of(int inc, const std::vector<int>& v) const {
    std::vector<int> o;
    for (int j = 0; j < opt.n; ++j)
      if (j != inc) o.push_back(v[static_cast<std::size_t>(j)]);
    return o;
  }

  double value(int inc, int q, const std::vector<int>& v_full) const {
    return J[index(inc, q, others_of(inc, v_full))];
  }
};

namespace detail {

inline std::vector<std::vector<double>> binomial_table(int v_max, double p) {
  std::vector<std::vector<double>> b(static_cast<std::size_t>(v_max + 1));
  for (int v = 0; v <= v_max; ++v) {
    auto& row = b[static_cast<std::size_t>(v)];
    row.assign(static_cast<std::size_t>(v + 1), 0.0);
    for (int c = 0; c <= v; ++c) {
      const double lg = std::lgamma(v + 1.0) - std::lgamma(c + 1.0) - std::lgamma(v - c + 1.0);
      const double lp = (c > 0 ? c * std::log(p) : 0.0) + (v - c > 0 ? (v - c) * std::log1p(-p) : 0.0);
      row[static_cast<std::size_t>(c)] = p <= 0.0 ? (c == 0 ? 1.0 : 0.0) : std::exp(lg + lp);
    }
  }
  return b;
}

// Iterates over every vector in [1, v_max]^m.
template <class F>
void for_each_v(int m, int v_max, F&& f) {
  std::vector<int> v(static_cast<std::size_t>(m), 1);
  while (true) {
    f(v);
    int k = m - 1;
    while (k >= 0 && v[static_cast<std::size_t>(k)] == v_max) v[static_cast<std::size_t>(k--)] = 1;
    if (k < 0) return;
    ++v[static_cast<std::size_t>(k)];
  }
}

}  // namespace detail

inline ValueTable value_iteration(const MdpOptions& opt) {
  if (opt.n < 2 || opt.n > 3) throw ConfigError("value_iteration supports N in {2,3}");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (opt.lambda < 0.0 || opt.n * opt.lambda >= 1.0) throw ConfigError("lambda outside region");
  if (opt.q_max < 1 || opt.v_max < 2) throw ConfigError("truncation too small");

  ValueTable T;
  T.opt = opt;
  const int n = opt.n, m = n - 1, qm = opt.q_max, vm = opt.v_max;
  const double lam = opt.lambda, a = opt.alpha;
  const auto binom = detail::binomial_table(vm, lam);
  T.J.assign(T.size(), 0.0);
  T.choice.assign(T.size(), -1);
  std::vector<double> next(T.size(), 0.0);

  auto cap_q = [&](int q) { return std::min(q, qm); };
  auto cap_v = [&](int v) { return std::min(v, vm); };

  // Expected continuation after choosing j from q = 0 state (inc, v).
  auto switch_value = [&](const std::vector<double>& J, int inc, const std::vector<int>& v,
                          int j) {
    std::vector<int> nv(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) nv[static_cast<std::size_t>(k)] = cap_v(v[static_cast<std::size_t>(k)] + 1);
    nv[static_cast<std::size_t>(j)] = 0;
    if (j != inc) nv[static_cast<std::size_t>(inc)] = 1;
    const std::vector<int> o = T.others_of(j, nv);
    const std::size_t base = T.index(j, 0, o);
    const std::size_t stride = T.index(j, 1, o) - base;
    const int vj = j == inc ? 0 : v[static_cast<std::size_t>(j)];
    const auto& row = binom[static_cast<std::size_t>(vj)];
    double e = 0.0;
    for (int c = 0; c <= vj; ++c) {
      const double pc = row[static_cast<std::size_t>(c)];
      if (pc == 0.0) continue;
      const int rest = std::max(c - 1, 0);
      e += pc * ((1.0 - lam) * J[base + stride * static_cast<std::size_t>(cap_q(rest))] +
                 lam * J[base + stride * static_cast<std::size_t>(cap_q(rest + 1))]);
    }
    return e;
  };

  double prev_res = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iter; ++it) {
    double res = 0.0;
    for (int inc = 0; inc < n; ++inc) {
      detail::for_each_v(m, vm, [&](const std::vector<int>& o) {
        const std::vector<int> v = T.full_v(inc, o);
        double others_cost = 0.0;
        for (int x : o) others_cost += lam * x;
        // q > 0: serve the incumbent.
        std::vector<int> ov(o.size());
        for (std::size_t k = 0; k < o.size(); ++k) ov[k] = cap_v(o[k] + 1);
        const std::size_t nb = T.index(inc, 0, ov);
        const std::size_t ns = T.index(inc, 1, ov) - nb;
        for (int q = 1; q <= qm; ++q) {
          const double e = (1.0 - lam) * T.J[nb + ns * static_cast<std::size_t>(q - 1)] +
                           lam * T.J[nb + ns * static_cast<std::size_t>(cap_q(q))];
          const std::size_t s = T.index(inc, q, o);
          next[s] = q + others_cost + a * e;
          res = std::max(res, std::abs(next[s] - T.J[s]));
        }
        // q = 0: switching decision.
        double best = std::numeric_limits<double>::infinity();
        int best_j = -1;
        for (int j = 0; j < n; ++j) {
          if (j == inc && !opt.allow_stay) continue;
          const double e = switch_value(T.J, inc, v, j);
          const double scale = std::max(1.0, std::abs(e));
          // Ties go to the larger V, then the lower id.
          if (best_j < 0 || e < best - 1e-12 * scale ||
              (std::abs(e - best) <= 1e-12 * scale && best_j >= 0 &&
               v[static_cast<std::size_t>(j)] > v[static_cast<std::size_t>(best_j)])) {
            best = e;
            best_j = j;
          }
        }
        const std::size_t s0 = T.index(inc, 0, o);
        next[s0] = others_cost + a * best;
        T.choice[s0] = best_j;
        res = std::max(res, std::abs(next[s0] - T.J[s0]));
      });
    }
    T.J.swap(next);
    T.iterations = it + 1;
    T.residual = res;
    if (std::isfinite(prev_res) && prev_res > 1e-6)
      T.worst_contraction = std::max(T.worst_contraction, res / prev_res);
    prev_res = res;
    if (res < opt.tol) {
      T.converged = true;
      break;
    }
  }
  return T;
}

struct MdpCheck {
  std::int64_t states = 0;     // reachable q = 0 states examined
  std::int64_t matched = 0;    // choice equals argmax V
  std::int64_t boundary = 0;   // mismatches touching the truncation band
  std::vector<std::vector<int>> mismatches;  // (inc, V...) of mismatching states
  std::int64_t monotone_violations = 0;

  double match_fraction() const {
    return states == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(states);
  }
};

// A q = 0 state is reachable under exhaustive service when the non-incumbent
// counts are pairwise distinct (each queue was last served at its own slot).
// States inside the top `band` of the V range are flagged as boundary states.
inline MdpCheck check_argmax_policy(const ValueTable& T, int band, int v_limit = -1) {
  MdpCheck r;
  const int n = T.opt.n, vm = T.opt.v_max;
  const int lim = v_limit < 0 ? vm : v_limit;
  for (int inc = 0; inc < n; ++inc) {
    detail::for_each_v(n - 1, vm, [&](const std::vector<int>& o) {
      for (int x : o)
        if (x > lim) return;
      std::vector<int> sorted = o;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return;
      const std::vector<int> v = T.full_v(inc, o);
      int arg = 0;
      for (int j = 1; j < n; ++j)
        if (v[static_cast<std::size_t>(j)] > v[static_cast<std::size_t>(arg)]) arg = j;
      ++r.states;
      if (T.choice[T.index(inc, 0, o)] == arg) {
        ++r.matched;
        return;
      }
      bool edge = false;
      for (int x : o) edge = edge || x > vm - band;
      if (edge) ++r.boundary;
      std::vector<int> rec{inc};
      rec.insert(rec.end(), v.begin(), v.end());
      r.mismatches.push_back(std::move(rec));
    });
  }
  // Monotone nondecreasing in q at fixed (incumbent, V).
  for (int inc = 0; inc < n; ++inc) {
    detail::for_each_v(n - 1, vm, [&](const std::vector<int>& o) {
      for (int q = 0; q < T.opt.q_max; ++q)
        if (T.J[T.index(inc, q + 1, o)] < T.J[T.index(inc, q, o)] - 1e-9) ++r.monotone_violations;
    });
  }
  return r;
}

// ---------------------------------------------------------------------------
// Coupled stochastic-dominance test: two policies share every arrival sample
// path (the arrival substream depends only on seed, queue and slot).
// ---------------------------------------------------------------------------

struct DominanceReport {
  std::vector<Slot> times;
  std::vector<double> mean_a, mean_b;
  std::vector<double> max_excess;  // max_x [P(Q^a > x) - P(Q^b > x)] per sampled t
  double threshold = 0.0;          // significance margin on max_excess
  int violations = 0;              // sampled t with max_excess above threshold
  bool identical = true;           // every sampled backlog equal
};

inline DominanceReport coupled_dominance_test(const SimConfig& a, const SimConfig& b,
                                              std::uint64_t first_seed, int seeds, Slot horizon,
                                              Slot stride) {
  if (seeds < 1 || horizon < 1 || stride < 1) throw ConfigError("dominance: bad arguments");
  DominanceReport r;
  for (Slot t = stride - 1; t < horizon; t += stride) r.times.push_back(t);
  const std::size_t m = r.times.size();
  std::vector<std::vector<std::int64_t>> qa(m), qb(m);
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(s);
    Simulation sa(a, seed), sb(b, seed);
    std::size_t k = 0;
    for (Slot t = 0; t < horizon && k < m; ++t) {
      sa.step();
      sb.step();
      if (t == r.times[k]) {
        qa[k].push_back(sa.total_backlog());
        qb[k].push_back(sb.total_backlog());
        ++k;
      }
    }
  }
  // Two-sample one-sided DKW margin at 1e-3 per sampled time.
  r.threshold = 2.0 * std::sqrt(std::log(1.0 / 1e-3) / (2.0 * seeds));
  for (std::size_t k = 0; k < m; ++k) {
    auto& x = qa[k];
    auto& y = qb[k];
    if (x != y) r.identical = false;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double sx = 0, sy = 0;
    for (auto v : x) sx += static_cast<double>(v);
    for (auto v : y) sy += static_cast<double>(v);
    r.mean_a.push_back(sx / seeds);
    r.mean_b.push_back(sy / seeds);
    const std::int64_t top = std::max(x.back(), y.back());
    double worst = -1.0;
    for (std::int64_t level = 0; level <= top; ++level) {
      const auto ga = x.end() - std::upper_bound(x.begin(), x.end(), level);
      const auto gb = y.end() - std::upper_bound(y.begin(), y.end(), level);
      worst = std::max(worst, static_cast<double>(ga - gb) / seeds);
    }
    r.max_excess.push_back(worst);
    if (worst > r.threshold) ++r.violations;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Lyapunov drift probes from states outside a finite set.
// ---------------------------------------------------------------------------

enum class Lyapunov : std::uint8_t { sum_q_cycle, kleq_quadratic };

struct DriftReport {
  std::int64_t samples = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  double threshold = 0.0;

  double upper() const { return mean + 3.0 * stderr_; }
  double lower() const { return mean - 3.0 * stderr_; }
};

// Threshold on max_i (Q_i(t-V_i) + lambda_i V_i) beyond which the K-slot drift
// of the quadratic function is below -epsilon.
inline double kleq_drift_threshold(const std::vector<double>& rates, int K) {
  double s = 0, s2 = 0;
  for (double r : rates) {
    s += r;
    s2 += r * r;
  }
  const double eps = 1.0 - s;
  if (eps <= 0.0) return std::numeric_limits<double>::infinity();
  return (K * (K - 1.0) * s2 + K * s + double(K) * K) / (2.0 * K * eps) + 1.0 / (2.0 * K);
}

struct DriftOptions {
  Lyapunov kind = Lyapunov::sum_q_cycle;
  double threshold = 0.0;          // state-set boundary (sumQ or max expected backlog)
  std::int64_t initial_backlog = 200;  // per queue at the start of every episode
  int episodes = 200;
  Slot episode_slots = 2000;
  std::uint64_t first_seed = 1;
};

namespace detail {

inline double kleq_lyapunov(const Simulation& sim) {
  const View& v = sim.info().common;
  const auto& rates = sim.config().arrivals.rates;
  double L = 0.0;
  for (int j = 0; j < sim.n(); ++j) {
    const double V = static_cast<double>(v.V(j, sim.now()));
    const double lam = rates[static_cast<std::size_t>(j)];
    const double base = v.residual.empty() ? 0.0 : static_cast<double>(v.residual[static_cast<std::size_t>(j)]);
    const double x = base + lam * V;
    L += x * x + V * lam * (1.0 - lam);
  }
  return L;
}

inline double kleq_max_score(const Simulation& sim) {
  const View& v = sim.info().common;
  const auto& rates = sim.config().arrivals.rates;
  double best = 0.0;
  for (int j = 0; j < sim.n(); ++j) {
    const double base = v.residual.empty() ? 0.0 : static_cast<double>(v.residual[static_cast<std::size_t>(j)]);
    best = std::max(best, base + rates[static_cast<std::size_t>(j)] *
                                     static_cast<double>(v.V(j, sim.now())));
  }
  return best;
}

}  // namespace detail

// sum_q_cycle: change of total backlog over N consecutive service periods
// (switch to switch), sampled when the total backlog exceeds the threshold.
// kleq_quadratic: K-slot change of the quadratic function, sampled every K
// slots when the largest expected backlog exceeds the threshold.
inline DriftReport drift_estimate(const SimConfig& cfg, const DriftOptions& opt) {
  DriftReport r;
  r.threshold = opt.threshold;
  double sum = 0.0, sum2 = 0.0;
  const int n = cfg.n();
  const int K = cfg.policy.K == kInfiniteK ? 1 : cfg.policy.K;
  for (int e = 0; e < opt.episodes; ++e) {
    Simulation sim(cfg, opt.first_seed + static_cast<std::uint64_t>(e));
    for (int i = 0; i < n; ++i) sim.inject(i, opt.initial_backlog);
    if (cfg.policy.uses_residuals()) {
      auto& info = sim.mutable_info();
      for (int i = 0; i < n; ++i)
        info.common.residual[static_cast<std::size_t>(i)] = opt.initial_backlog;
    }
    if (opt.kind == Lyapunov::sum_q_cycle) {
      // Service-period boundaries are incumbent changes.
      std::vector<std::int64_t> at_switch;
      int inc = sim.info().common.incumbent;
      at_switch.push_back(sim.total_backlog());
      for (Slot t = 0; t < opt.episode_slots; ++t) {
        sim.step();
        if (sim.info().common.incumbent != inc) {
          inc = sim.info().common.incumbent;
          at_switch.push_back(sim.total_backlog());
        }
      }
      for (std::size_t k = 0; k + static_cast<std::size_t>(n) < at_switch.size();
           k += static_cast<std::size_t>(n)) {
        if (static_cast<double>(at_switch[k]) <= opt.threshold) continue;
        const double d = static_cast<double>(at_switch[k + static_cast<std::size_t>(n)] - at_switch[k]);
        sum += d;
        sum2 += d * d;
        ++r.samples;
      }
    } else {
      for (Slot t = 0; t + K <= opt.episode_slots; t += K) {
        const bool outside = detail::kleq_max_score(sim) > opt.threshold;
        const double before = detail::kleq_lyapunov(sim);
        for (int k = 0; k < K; ++k) sim.step();
        if (!outside) continue;
        const double d = detail::kleq_lyapunov(sim) - before;
        sum += d;
        sum2 += d * d;
        ++r.samples;
      }
    }
  }
  if (r.samples > 0) {
    r.mean = sum / static_cast<double>(r.samples);
    const double var = std::max(0.0, sum2 / static_cast<double>(r.samples) - r.mean * r.mean);
    r.stderr_ = std::sqrt(var / static_cast<double>(r.samples));
  }
  return r;
}

}  // namespace hybridmac
