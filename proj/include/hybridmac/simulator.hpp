#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "hybridmac/core.hpp"
#include "hybridmac/frame.hpp"
#include "hybridmac/policies.hpp"

namespace hybridmac {

struct SimConfig {
  ArrivalSpec arrivals;
  PolicyConfig policy;
  FrameLayout layout;
  CcaModel cca;
  std::optional<std::vector<double>> fading;  // per-queue success probabilities
  bool arrivals_at_zero = true;               // Q(0) = A(0)

  int n() const { return arrivals.size(); }

  // RESET runs whenever CCA errors are possible.
  bool reset_enabled() const { return policy.distributed() && cca.p_miss > 0.0; }

  void validate() const {
    arrivals.validate();
    policy.validate(layout);
    cca.validate();
    // Two colliding nodes can only separate when a backoff tie is not certain.
    if (reset_enabled() && layout.T_c < 2)
      throw ConfigError("CCA errors need T_c >= 2: the RESET request is sent by contention");
    if (fading) capacity_check(arrivals, fading);
  }
};

struct ResetState {
  enum Node : std::uint8_t { NOCOLL, COLL };
  std::vector<Node> node;
  std::vector<int> timeouts;
  bool rstbcn_pending = false;
  int coll_count = 0;

  void init(int n) {
    node.assign(static_cast<std::size_t>(n), NOCOLL);
    timeouts.assign(static_cast<std::size_t>(n), 0);
    rstbcn_pending = false;
    coll_count = 0;
  }
};

// Bookkeeping of CCA-induced disagreements between node copies.
struct AlignmentStats {
  std::int64_t misses = 0;
  std::int64_t poll_misses = 0;         // misses on poll-and-test minislots
  std::int64_t repaired_same_slot = 0;  // the missing node ended the slot aligned
  std::int64_t episodes = 0;            // spans with at least one divergent copy
  std::int64_t ended_by_reset = 0;
  std::int64_t ended_otherwise = 0;
  std::int64_t resets = 0;
  std::int64_t reset_slots = 0;
  std::int64_t longest_episode = 0;
  std::int64_t open_since = -1;
};

struct GklsState {
  int queue = -1;
  int dwell_left = 0;
  std::int64_t gated_left = 0;
};

class Simulation {
 public:
  Simulation(SimConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    const int n = cfg_.n();
    queues_.assign(static_cast<std::size_t>(n), QueueState{});
    backlog_.assign(static_cast<std::size_t>(n), 0);
    info_.init(n, cfg_.policy.uses_residuals());
    reset_.init(n);
    state_.assign(static_cast<std::size_t>(n), kLive);
    start_.assign(static_cast<std::size_t>(n), -1);
    own_plan_.assign(static_cast<std::size_t>(n), Plan{});
  }

  const SimConfig& config() const { return cfg_; }
  const Rng& rng() const { return rng_; }
  Slot now() const { return t_; }
  int n() const { return cfg_.n(); }

  const std::vector<QueueState>& queues() const { return queues_; }
  std::vector<QueueState>& mutable_queues() { return queues_; }
  const CommonInfo& info() const { return info_; }
  CommonInfo& mutable_info() { return info_; }
  const ResetState& reset_state() const { return reset_; }
  const AlignmentStats& alignment() const { return align_; }
  GklsState& gkls() { return gkls_; }

  std::int64_t total_backlog() const { return total_; }
  std::int64_t backlog(int i) const { return backlog_[static_cast<std::size_t>(i)]; }
  std::int64_t alarm_backlog() const { return alarm_total_; }

  // Backlog of the slot just executed, after its arrivals and before its departure.
  std::int64_t last_backlog() const { return last_total_; }
  const std::optional<Packet>& last_departure() const { return departure_; }
  const SlotOutcome& last_outcome() const { return out_; }
  // Incumbent of the aligned copy at the start of the slot just executed.
  int last_incumbent() const { return last_incumbent_; }
  std::int64_t last_incumbent_backlog() const { return last_incumbent_backlog_; }
  const std::vector<Arrival>& last_arrivals() const { return arrivals_; }

  // Puts packets directly into a queue (initial conditions for drift probes).
  void inject(int queue, std::int64_t count, Slot arrival_slot = 0,
              PacketClass cls = PacketClass::data) {
    for (std::int64_t k = 0; k < count; ++k) push(Packet{arrival_slot, queue, cls});
  }

  void set_time(Slot t) { t_ = t; }

  // Arrivals at t, decisions at t+, departure at (t+1)-.
  const SlotOutcome& step() {
    const Slot t = t_;
    if (t > 0 || cfg_.arrivals_at_zero) {
      step_arrivals(cfg_.arrivals, rng_, t, arrivals_);
      for (int i = 0; i < n(); ++i) {
        const Arrival a = arrivals_[static_cast<std::size_t>(i)];
        if (a == Arrival::none) continue;
        push(Packet{t, i, a == Arrival::alarm ? PacketClass::alarm : PacketClass::data});
      }
    } else {
      arrivals_.assign(static_cast<std::size_t>(n()), Arrival::none);
    }
    last_total_ = total_;
    last_incumbent_ = info_.common.incumbent;
    last_incumbent_backlog_ = backlog(last_incumbent_);
    departure_.reset();
    out_ = SlotOutcome{};
    switch (cfg_.policy.kind) {
      case PolicyKind::Oracle: oracle_slot(false); break;
      case PolicyKind::PriorityOracle: oracle_slot(true); break;
      case PolicyKind::TDMA: tdma_slot(); break;
      case PolicyKind::GKLS: gkls_slot(); break;
      case PolicyKind::AlwaysIdle: break;
      default: distributed_slot(); break;
    }
    ++t_;
    return out_;
  }

  void run(Slot slots) {
    for (Slot k = 0; k < slots; ++k) step();
  }

 private:
  static constexpr std::uint8_t kLive = 0, kDeferred = 1, kTx = 2, kJam = 3;

  void push(const Packet& p) {
    queues_[static_cast<std::size_t>(p.queue)].push(p);
    ++backlog_[static_cast<std::size_t>(p.queue)];
    ++total_;
    if (p.cls == PacketClass::alarm) ++alarm_total_;
  }

  bool channel_ok(int q) const {
    if (!cfg_.fading) return true;
    return rng_.bernoulli((*cfg_.fading)[static_cast<std::size_t>(q)], Noise::fading,
                          static_cast<std::uint32_t>(q), static_cast<std::uint64_t>(t_));
  }

  // Single transmission by q; returns true on departure.
  bool transmit(int q, ServeClass cls) {
    out_.transmitter = q;
    out_.scheduled = q;
    out_.transmitters.push_back(q);
    const bool ok = channel_ok(q);
    auto p = apply_service(queues_[static_cast<std::size_t>(q)], true, ok, cls);
    if (!p) {
      out_.faded = true;
      out_.outcome = Outcome::idle_wasted;
      return false;
    }
    --backlog_[static_cast<std::size_t>(q)];
    --total_;
    if (p->cls == PacketClass::alarm) --alarm_total_;
    ++info_.departures[static_cast<std::size_t>(q)];
    departure_ = *p;
    out_.departed = true;
    out_.outcome = Outcome::success;
    return true;
  }

  void oracle_slot(bool alarms_first) {
    int pick = -1;
    ServeClass cls = ServeClass::any;
    if (alarms_first && alarm_total_ > 0) {
      for (int i = 0; i < n() && pick < 0; ++i)
        if (!queues_[static_cast<std::size_t>(i)].alarm.empty()) pick = i;
      cls = ServeClass::alarm;
    }
    if (pick < 0) {
      for (int i = 0; i < n() && pick < 0; ++i)
        if (backlog_[static_cast<std::size_t>(i)] > 0) pick = i;
      cls = alarms_first ? ServeClass::data : ServeClass::any;
    }
    if (pick >= 0) transmit(pick, cls);
  }

  void tdma_slot() {
    const int q = tdma_select(t_, n());
    out_.scheduled = q;
    if (backlog(q) > 0) transmit(q, ServeClass::any);
  }

  double gkls_score(int k) const {
    const View& v = info_.common;
    return static_cast<double>(v.residual[static_cast<std::size_t>(k)]) +
           cfg_.arrivals.rates[static_cast<std::size_t>(k)] * static_cast<double>(v.V(k, t_));
  }

  void gkls_slot() {
    View& v = info_.common;
    if (gkls_.dwell_left <= 0) {
      int best = 0;
      for (int k = 1; k < n(); ++k)
        if (gkls_score(k) > gkls_score(best)) best = k;
      gkls_.queue = best;
      gkls_.dwell_left = cfg_.policy.K;
      gkls_.gated_left = backlog(best);
      v.incumbent = best;
      v.run = 0;
    }
    const int q = gkls_.queue;
    out_.scheduled = q;
    if (gkls_.gated_left > 0) {
      if (transmit(q, ServeClass::any)) --gkls_.gated_left;
      ++v.run;
    }
    v.last[static_cast<std::size_t>(q)] = t_ + 1;
    v.residual[static_cast<std::size_t>(q)] = backlog(q);
    --gkls_.dwell_left;
  }

  ServeClass data_class() const {
    return cfg_.policy.kind == PolicyKind::QZMAC_alarm ? ServeClass::data : ServeClass::any;
  }

  bool has_data(int j) const {
    const auto& q = queues_[static_cast<std::size_t>(j)];
    return cfg_.policy.kind == PolicyKind::QZMAC_alarm ? !q.data.empty() : !q.empty();
  }

  std::uint64_t cca_counter(int minislot) const {
    return static_cast<std::uint64_t>(t_) * 64u + static_cast<std::uint64_t>(minislot);
  }

  void alarm_slot() {
    out_.alarm_mode = true;
    std::vector<int> holders;
    for (int j = 0; j < n(); ++j)
      if (!queues_[static_cast<std::size_t>(j)].alarm.empty()) holders.push_back(j);
    const auto& L = cfg_.layout;
    out_.contention_entered = true;
    ContentionResult r = run_contention(holders, L.T_c, rng_, t_, 1);
    if (r.kind == ContentionResult::winner) {
      out_.minislots_consumed = L.T_a + L.T_p + r.backoff + 1;
      transmit(r.node, ServeClass::alarm);
    } else if (r.kind == ContentionResult::collision) {
      out_.minislots_consumed = L.T_a + L.T_p + r.backoff + 1;
      out_.outcome = Outcome::collision;
      out_.transmitters = r.transmitters;
    } else {
      out_.minislots_consumed = L.total();
    }
  }

  const Plan& plan_of(int j) const {
    return info_.own[static_cast<std::size_t>(j)] ? own_plan_[static_cast<std::size_t>(j)]
                                                  : common_plan_;
  }

  // Plan position of node w as seen through plan p, or -1.
  int role_of(const Plan& p, int w) const {
    const int lim = std::min(p.size, cfg_.layout.T_p + 1);
    for (int k = 0; k < lim; ++k)
      if (p.at(k) == w) return k;
    return -1;
  }

  void distributed_slot() {
    const FrameLayout& L = cfg_.layout;
    const PolicyConfig& pol = cfg_.policy;
    const int N = n();
    const Slot t = t_;

    if (pol.kind == PolicyKind::QZMAC_alarm && alarm_total_ > 0 && reset_.coll_count == 0) {
      alarm_slot();
      return;
    }

    RankContext ctx;
    ctx.policy = &pol;
    ctx.rates = &cfg_.arrivals.rates;
    ctx.t = t;
    if (detail::leq_estimated_rule(pol)) ctx.estimates = info_.rate_estimates(t);
    common_plan_ = make_plan(info_.common, ctx, L, N);
    divergent_nodes_.clear();
    for (int j = 0; j < N; ++j) {
      if (!info_.own[static_cast<std::size_t>(j)]) continue;
      divergent_nodes_.push_back(j);
      own_plan_[static_cast<std::size_t>(j)] =
          make_plan(*info_.own[static_cast<std::size_t>(j)], ctx, L, N);
    }

    std::fill(state_.begin(), state_.end(), kLive);
    std::fill(start_.begin(), start_.end(), -1);
    int live = N;
    MissBudget budget;
    int missing_node = -1;
    std::vector<int>& polled_tx = scratch_tx_;
    polled_tx.clear();
    int first_start = -1;
    const bool jam = reset_.coll_count > 0;
    if (jam) {
      for (int j = 0; j < N; ++j)
        if (reset_.node[static_cast<std::size_t>(j)] == ResetState::COLL) {
          state_[static_cast<std::size_t>(j)] = kJam;
          --live;
        }
      first_start = 0;
    }

    auto try_start = [&](int j, int k) {
      if (state_[static_cast<std::size_t>(j)] != kLive) return;
      const Plan& p = plan_of(j);
      if (k >= p.size || p.at(k) != j || !has_data(j)) return;
      if (k == L.T_p && p.size <= L.T_p) return;
      state_[static_cast<std::size_t>(j)] = kTx;
      start_[static_cast<std::size_t>(j)] = k;
      polled_tx.push_back(j);
      --live;
      if (first_start < 0) first_start = k;
    };

    for (int k = 0; k <= L.T_p && live > 0; ++k) {
      if (k < common_plan_.size) {
        const int c = common_plan_.at(k);
        if (!info_.own[static_cast<std::size_t>(c)]) try_start(c, k);
      }
      for (int j : divergent_nodes_) try_start(j, k);
      if (k == L.T_p) break;
      if (polled_tx.empty() && !jam) continue;
      // Busy minislot: every live node listens.
      std::optional<int> miss = inject_miss(live, cfg_.cca, rng_, cca_counter(k), budget);
      int idx = 0;
      for (int j = 0; j < N; ++j) {
        if (state_[static_cast<std::size_t>(j)] != kLive) continue;
        if (miss && idx == *miss) {
          missing_node = j;
        } else {
          state_[static_cast<std::size_t>(j)] = kDeferred;
          start_[static_cast<std::size_t>(j)] = k;
          --live;
        }
        ++idx;
      }
    }

    // Contention phase.
    ContentionResult cont;
    bool reset_contention = false;
    if (jam) {
      std::vector<int> coll;
      for (int j = 0; j < N; ++j)
        if (state_[static_cast<std::size_t>(j)] == kJam) coll.push_back(j);
      cont = run_contention(coll, L.T_c, rng_, t, 2, cfg_.cca, &budget, cca_counter(40));
      reset_contention = true;
      out_.contention_entered = true;
    } else if (polled_tx.empty()) {
      std::vector<int> contenders;
      bool entered = false;
      for (int j = 0; j < N; ++j) {
        if (state_[static_cast<std::size_t>(j)] != kLive) continue;
        const Plan& p = plan_of(j);
        if (!p.contention || p.size > L.T_p || L.T_c <= 0) continue;
        entered = true;
        if (has_data(j)) contenders.push_back(j);
      }
      out_.contention_entered = entered;
      if (!contenders.empty())
        cont = run_contention(contenders, L.T_c, rng_, t, 0, cfg_.cca, &budget,
                              cca_counter(41));
    }

    // Resolve the data portion.
    std::vector<int>& tx = out_.transmitters;
    tx = polled_tx;
    if (!reset_contention)
      for (int j : cont.transmitters) tx.push_back(j);
    std::sort(tx.begin(), tx.end());
    int decoded = -1;
    bool beacon = false;
    if (jam) {
      out_.outcome = Outcome::reset_activity;
      ++align_.reset_slots;
      beacon = cont.kind == ContentionResult::winner;
      out_.minislots_consumed =
          L.T_a + L.T_p + (cont.backoff >= 0 ? cont.backoff + 1 : L.T_c);
    } else if (tx.size() == 1) {
      decoded = tx.front();
      std::vector<int> keep = tx;
      transmit(decoded, data_class());
      out_.transmitters = keep;
      const int s = start_[static_cast<std::size_t>(decoded)];
      out_.minislots_consumed = state_[static_cast<std::size_t>(decoded)] == kTx && s >= 0
                                    ? L.T_a + std::min(s + 1, L.T_p)
                                    : L.T_a + L.T_p + cont.backoff + 1;
    } else if (tx.size() > 1) {
      out_.outcome = Outcome::collision;
      out_.minislots_consumed = first_start >= 0 ? L.T_a + std::min(first_start + 1, L.T_p)
                                                 : L.T_a + L.T_p + cont.backoff + 1;
    } else {
      out_.outcome = Outcome::idle_wasted;
      out_.minislots_consumed = L.T_a + L.T_p + (out_.contention_entered ? L.T_c : 0);
      if (common_plan_.size > L.T_p) out_.scheduled = common_plan_.at(L.T_p);
    }

    // Header information carried by the decoded transmission.
    const std::int64_t decoded_after = decoded >= 0 ? backlog(decoded) : 0;

    // What a node with the aligned copy and faithful sensing concludes.
    Event canon;
    const bool decoded_polled =
        decoded >= 0 && state_[static_cast<std::size_t>(decoded)] == kTx;
    if (decoded >= 0) {
      const int r = decoded_polled ? role_of(common_plan_, decoded) : -1;
      if (r >= 0) {
        canon.kind = Event::polled_tx;
        canon.pos = r;
      } else {
        canon.kind = Event::contention_tx;
        canon.node = decoded;
      }
      canon.backlog_after = decoded_after;
    } else if (first_start >= 0) {
      if (first_start < common_plan_.size) {
        canon.kind = Event::polled_tx;
        canon.pos = first_start;
      }
    } else if (cont.kind == ContentionResult::collision) {
      canon.kind = Event::contention_collision;
    }

    auto node_event = [&](int j) {
      Event e;
      const Plan& p = plan_of(j);
      const auto st = state_[static_cast<std::size_t>(j)];
      const int s = start_[static_cast<std::size_t>(j)];
      if (st == kTx) {
        e.kind = Event::polled_tx;
        e.pos = s;
        e.backlog_after = backlog(j);
        return e;
      }
      if (std::find(cont.transmitters.begin(), cont.transmitters.end(), j) !=
              cont.transmitters.end() &&
          !reset_contention) {
        if (decoded == j) {
          e.kind = Event::contention_tx;
          e.node = j;
          e.backlog_after = decoded_after;
        } else {
          e.kind = Event::contention_collision;
        }
        return e;
      }
      if (decoded >= 0) {
        const int r = decoded_polled ? role_of(p, decoded) : -1;
        if (r >= 0) {
          e.kind = Event::polled_tx;
          e.pos = r;
        } else {
          e.kind = Event::contention_tx;
          e.node = decoded;
        }
        e.backlog_after = decoded_after;
        return e;
      }
      if (st == kDeferred && s >= 0) {
        if (s < p.size) {
          e.kind = Event::polled_tx;
          e.pos = s;
        }
        return e;
      }
      if (cont.kind == ContentionResult::collision && !reset_contention)
        e.kind = Event::contention_collision;
      return e;
    };

    // Nodes whose observation may differ from the aligned one.
    special_.clear();
    for (int j : tx) special_.push_back(j);
    if (missing_node >= 0) special_.push_back(missing_node);
    for (int j : divergent_nodes_) special_.push_back(j);
    std::sort(special_.begin(), special_.end());
    special_.erase(std::unique(special_.begin(), special_.end()), special_.end());

    const View before = info_.common;
    for (int j : special_) {
      if (state_[static_cast<std::size_t>(j)] == kJam) continue;
      auto& own = info_.own[static_cast<std::size_t>(j)];
      const Event e = node_event(j);
      if (own) {
        advance_view(*own, own_plan_[static_cast<std::size_t>(j)], e, pol, t);
      } else if (!(e == canon)) {
        own = before;
        advance_view(*own, common_plan_, e, pol, t);
        ++info_.divergent;
      }
    }
    advance_view(info_.common, common_plan_, canon, pol, t);

    // Acknowledgement bookkeeping for polled transmissions.
    for (int j : polled_tx) {
      auto& to = reset_.timeouts[static_cast<std::size_t>(j)];
      if (decoded == j && out_.departed) {
        to = 0;
      } else {
        ++to;
        if (cfg_.reset_enabled() && to >= pol.K_thr &&
            reset_.node[static_cast<std::size_t>(j)] == ResetState::NOCOLL) {
          reset_.node[static_cast<std::size_t>(j)] = ResetState::COLL;
          ++reset_.coll_count;
        }
      }
    }
    if (decoded >= 0 && out_.departed && !reset_contention)
      reset_.timeouts[static_cast<std::size_t>(decoded)] = 0;

    const bool had_divergence = align_.open_since >= 0;
    if (beacon) {
      info_.reset_views(pol.uses_residuals(), t + 1);
      reset_.init(N);
      ++align_.resets;
    } else {
      for (int j : special_) {
        auto& own = info_.own[static_cast<std::size_t>(j)];
        if (own && *own == info_.common) {
          own.reset();
          --info_.divergent;
        }
      }
    }

    out_.cca_misses = CcaModel::max_misses_per_slot - budget.remaining;
    align_.misses += out_.cca_misses;
    if (missing_node >= 0) ++align_.poll_misses;
    if (missing_node >= 0 && !info_.own[static_cast<std::size_t>(missing_node)])
      ++align_.repaired_same_slot;
    if (!had_divergence && info_.divergent > 0) {
      align_.open_since = t;
      ++align_.episodes;
    } else if (had_divergence && info_.divergent == 0) {
      if (beacon)
        ++align_.ended_by_reset;
      else
        ++align_.ended_otherwise;
      align_.longest_episode = std::max<std::int64_t>(align_.longest_episode,
                                                       t + 1 - align_.open_since);
      align_.open_since = -1;
    }
  }

  SimConfig cfg_;
  Rng rng_;
  Slot t_ = 0;
  std::vector<QueueState> queues_;
  std::vector<std::int64_t> backlog_;
  std::int64_t total_ = 0;
  std::int64_t alarm_total_ = 0;
  std::int64_t last_total_ = 0;
  int last_incumbent_ = 0;
  std::int64_t last_incumbent_backlog_ = 0;
  CommonInfo info_;
  ResetState reset_;
  AlignmentStats align_;
  GklsState gkls_;
  SlotOutcome out_;
  std::optional<Packet> departure_;
  std::vector<Arrival> arrivals_;

  Plan common_plan_;
  std::vector<Plan> own_plan_;
  std::vector<int> divergent_nodes_;
  std::vector<std::uint8_t> state_;
  std::vector<int> start_;
  std::vector<int> scratch_tx_;
  std::vector<int> special_;
};

}  // namespace hybridmac
