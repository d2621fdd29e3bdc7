#pragma once

#include <algorithm>
#include <array>
#include <climits>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hybridmac/core.hpp"
#include "hybridmac/frame.hpp"

namespace hybridmac {

enum class PolicyKind : std::uint8_t {
  Oracle,
  PriorityOracle,  // centralized, alarms first
  TDMA,
  ZMAC,
  EZMAC,
  QZMAC,
  LEQ_exact,
  LEQ_estimated,
  CyclicExhaustive,
  CyclicDeviating,  // argmax V except second-largest V on {0..k}^N
  CyclicLimited,    // at most K services, then argmax V among the others
  KLEQ,
  GKLS,
  QZMAC_alarm,
  AlwaysIdle,
};

// Switching rule used by the QZMAC family at its i* poll.
enum class Selection : std::uint8_t { cyclic, leq_exact, leq_estimated };

constexpr int kInfiniteK = INT_MAX;

struct PolicyConfig {
  PolicyKind kind = PolicyKind::QZMAC;
  Selection selection = Selection::cyclic;
  int K = 1;
  int K_thr = 5;
  int deviation_k = 40;

  bool distributed() const {
    switch (kind) {
      case PolicyKind::Oracle:
      case PolicyKind::PriorityOracle:
      case PolicyKind::TDMA:
      case PolicyKind::GKLS:
      case PolicyKind::AlwaysIdle: return false;
      default: return true;
    }
  }

  bool qzmac_family() const {
    return kind == PolicyKind::QZMAC || kind == PolicyKind::QZMAC_alarm;
  }

  bool uses_residuals() const { return kind == PolicyKind::KLEQ || kind == PolicyKind::GKLS; }

  int min_T_p() const {
    switch (kind) {
      case PolicyKind::ZMAC: return 1;
      case PolicyKind::EZMAC: return 2;
      case PolicyKind::QZMAC:
      case PolicyKind::QZMAC_alarm: return 3;
      case PolicyKind::LEQ_exact:
      case PolicyKind::LEQ_estimated:
      case PolicyKind::CyclicExhaustive:
      case PolicyKind::CyclicDeviating:
      case PolicyKind::CyclicLimited:
      case PolicyKind::KLEQ: return 1;
      default: return 0;
    }
  }

  void validate(const FrameLayout& layout) const {
    layout.validate();
    if (layout.T_p < min_T_p())
      throw ConfigError("T_p=" + std::to_string(layout.T_p) + " below the policy minimum " +
                        std::to_string(min_T_p()));
    if (kind == PolicyKind::QZMAC_alarm && layout.T_a != 1)
      throw ConfigError("QZMAC_alarm requires T_a=1");
    // Alarm holders have no poll to fall back on; a single minislot ties forever.
    if (kind == PolicyKind::QZMAC_alarm && layout.T_c < 2)
      throw ConfigError("QZMAC_alarm requires T_c >= 2");
    if ((kind == PolicyKind::KLEQ || kind == PolicyKind::GKLS ||
         kind == PolicyKind::CyclicLimited) &&
        K < 1)
      throw ConfigError("K must be at least 1");
    if (K_thr < 1) throw ConfigError("K_thr must be at least 1");
    if (kind == PolicyKind::CyclicDeviating && deviation_k < 0)
      throw ConfigError("deviation_k must be nonnegative");
  }
};

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Oracle: return "Oracle";
    case PolicyKind::PriorityOracle: return "PriorityOracle";
    case PolicyKind::TDMA: return "TDMA";
    case PolicyKind::ZMAC: return "ZMAC";
    case PolicyKind::EZMAC: return "EZMAC";
    case PolicyKind::QZMAC: return "QZMAC";
    case PolicyKind::LEQ_exact: return "LEQ_exact";
    case PolicyKind::LEQ_estimated: return "LEQ_estimated";
    case PolicyKind::CyclicExhaustive: return "CyclicExhaustive";
    case PolicyKind::CyclicDeviating: return "CyclicDeviating";
    case PolicyKind::CyclicLimited: return "CyclicLimited";
    case PolicyKind::KLEQ: return "KLEQ";
    case PolicyKind::GKLS: return "GKLS";
    case PolicyKind::QZMAC_alarm: return "QZMAC_alarm";
    default: return "AlwaysIdle";
  }
}

inline std::optional<PolicyKind> policy_from_string(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(PolicyKind::AlwaysIdle); ++k) {
    auto kind = static_cast<PolicyKind>(k);
    if (s == to_string(kind)) return kind;
  }
  return std::nullopt;
}

inline const char* to_string(Selection s) {
  switch (s) {
    case Selection::cyclic: return "cyclic";
    case Selection::leq_exact: return "leq_exact";
    default: return "leq_estimated";
  }
}

inline std::optional<Selection> selection_from_string(const std::string& s) {
  if (s == "cyclic") return Selection::cyclic;
  if (s == "leq_exact") return Selection::leq_exact;
  if (s == "leq_estimated") return Selection::leq_estimated;
  return std::nullopt;
}

// ---- pure selection rules -------------------------------------------------

inline std::optional<int> oracle_select(const std::vector<std::int64_t>& backlogs) {
  for (std::size_t i = 0; i < backlogs.size(); ++i)
    if (backlogs[i] > 0) return static_cast<int>(i);
  return std::nullopt;
}

// 0-based owner of slot t.
inline int tdma_select(Slot t, int n) { return static_cast<int>(t % n); }

// argmax rates_i * V_i, lowest index on ties.
inline int leq_select(const std::vector<std::int64_t>& V, const std::vector<double>& rates) {
  int best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < V.size(); ++i) {
    const double s = rates[i] * static_cast<double>(V[i]);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// ---- common information ---------------------------------------------------

// One node's copy of the shared bookkeeping. V_k(t) = t - last[k].
struct View {
  std::vector<Slot> last;
  int incumbent = 0;
  int su = -1;
  int run = 0;                          // consecutive services of the incumbent
  std::vector<std::int64_t> residual;   // backlog seen at the last service (K-limited rules)

  std::int64_t V(int k, Slot t) const { return t - last[static_cast<std::size_t>(k)]; }

  std::vector<std::int64_t> V_vector(Slot t) const {
    std::vector<std::int64_t> v(last.size());
    for (std::size_t k = 0; k < last.size(); ++k) v[k] = t - last[k];
    return v;
  }

  bool operator==(const View&) const = default;
};

// V_k = k (1-based k) at slot `origin`, incumbent queue 1, SU queue 2.
inline View initial_view(int n, bool with_residuals, Slot origin = 0) {
  View v;
  v.last.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) v.last[static_cast<std::size_t>(k)] = origin - (k + 1);
  v.incumbent = 0;
  v.su = n >= 2 ? 1 : -1;
  v.run = 0;
  if (with_residuals) v.residual.assign(static_cast<std::size_t>(n), 0);
  return v;
}

struct CommonInfo {
  View common;                           // shared by every aligned node
  std::vector<std::optional<View>> own;  // copies of nodes that diverged
  std::vector<std::int64_t> departures;  // per-queue departures heard so far
  int divergent = 0;

  void init(int n, bool with_residuals) {
    common = initial_view(n, with_residuals);
    own.assign(static_cast<std::size_t>(n), std::nullopt);
    departures.assign(static_cast<std::size_t>(n), 0);
    divergent = 0;
  }

  const View& view(int j) const {
    const auto& o = own[static_cast<std::size_t>(j)];
    return o ? *o : common;
  }

  void reset_views(bool with_residuals, Slot origin) {
    common = initial_view(static_cast<int>(own.size()), with_residuals, origin);
    for (auto& o : own) o.reset();
    divergent = 0;
  }

  bool aligned() const { return divergent == 0; }

  // λ̂_i(T) = D_i / T with T the number of elapsed slots.
  std::vector<double> rate_estimates(Slot t) const {
    std::vector<double> r(departures.size());
    const double T = static_cast<double>(std::max<Slot>(t, 1));
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>(departures[i]) / T;
    return r;
  }
};

// ---- per-slot action script ----------------------------------------------

// Candidates are polled in order, one minislot each; the candidate at
// index T_p, if any, is granted the data portion without a test.
struct Plan {
  std::array<int, 16> cand{};
  int size = 0;
  int first_switch = 0;  // candidates before this index are the incumbent
  int su_pos = -1;
  bool contention = false;
  bool alarm_aware = false;

  void push(int q) { cand[static_cast<std::size_t>(size++)] = q; }
  bool contains(int q) const {
    for (int i = 0; i < size; ++i)
      if (cand[static_cast<std::size_t>(i)] == q) return true;
    return false;
  }
  int at(int i) const { return cand[static_cast<std::size_t>(i)]; }
};

struct RankContext {
  const PolicyConfig* policy = nullptr;
  const std::vector<double>* rates = nullptr;  // exact λ
  std::vector<double> estimates;               // filled for leq_estimated
  Slot t = 0;
};

namespace detail {

inline bool leq_estimated_rule(const PolicyConfig& p) {
  return p.kind == PolicyKind::LEQ_estimated ||
         (p.qzmac_family() && p.selection == Selection::leq_estimated);
}

inline bool leq_exact_rule(const PolicyConfig& p) {
  return p.kind == PolicyKind::LEQ_exact ||
         (p.qzmac_family() && p.selection == Selection::leq_exact);
}

// Appends up to m switch targets to the plan, best first.
inline void append_ranked(Plan& plan, const View& v, const RankContext& ctx, int m,
                          int exclude) {
  const int n = static_cast<int>(v.last.size());
  const PolicyConfig& p = *ctx.policy;
  std::array<double, 512> scratch_static;
  std::vector<double> scratch_dyn;
  double* score = scratch_static.data();
  if (n > static_cast<int>(scratch_static.size())) {
    scratch_dyn.resize(static_cast<std::size_t>(n));
    score = scratch_dyn.data();
  }
  bool by_estimate = leq_estimated_rule(p);
  const double floor_rate = 1.0 / static_cast<double>(std::max<Slot>(ctx.t, 1));
  for (int k = 0; k < n; ++k) {
    const double V = static_cast<double>(v.V(k, ctx.t));
    double s = V;
    if (p.kind == PolicyKind::KLEQ) {
      s = static_cast<double>(v.residual[static_cast<std::size_t>(k)]) +
          (*ctx.rates)[static_cast<std::size_t>(k)] * V;
    } else if (leq_exact_rule(p)) {
      s = (*ctx.rates)[static_cast<std::size_t>(k)] * V;
    } else if (by_estimate) {
      // A queue never heard from is ranked as if it had one departure, so
      // its zero estimate cannot lock it out of service. All-zero estimates
      // thus reduce to argmax V.
      s = std::max(ctx.estimates[static_cast<std::size_t>(k)], floor_rate) * V;
    }
    score[k] = s;
  }
  int deviation_skip = -1;
  if (p.kind == PolicyKind::CyclicDeviating) {
    bool inside = true;
    int top = -1;
    for (int k = 0; k < n; ++k) {
      if (v.V(k, ctx.t) > p.deviation_k) inside = false;
      if (k != exclude && (top < 0 || score[k] > score[top])) top = k;
    }
    if (inside) deviation_skip = top;
  }
  for (int r = 0; r < m && plan.size < static_cast<int>(plan.cand.size()); ++r) {
    int best = -1;
    for (int k = 0; k < n; ++k) {
      if (k == exclude || k == deviation_skip || plan.contains(k)) continue;
      if (best < 0 || score[k] > score[best]) best = k;
    }
    if (best < 0) {
      if (deviation_skip >= 0 && !plan.contains(deviation_skip)) {
        best = deviation_skip;
        deviation_skip = -1;
      } else {
        break;
      }
    }
    plan.push(best);
  }
}

}  // namespace detail

inline Plan zmac_plan(Slot t, int n) {
  Plan p;
  p.push(tdma_select(t, n));
  p.first_switch = 1;
  p.contention = true;
  return p;
}

inline Plan ezmac_plan(const View& v, Slot t, int n) {
  Plan p = zmac_plan(t, n);
  if (v.su >= 0 && v.su != p.at(0)) {
    p.su_pos = p.size;
    p.push(v.su);
  }
  return p;
}

inline Plan qzmac_plan(const View& v, const RankContext& ctx, const FrameLayout& layout) {
  Plan p;
  p.push(v.incumbent);
  p.first_switch = 1;
  detail::append_ranked(p, v, ctx, std::max(1, layout.T_p - 2), v.incumbent);
  if (v.su >= 0 && !p.contains(v.su)) {
    p.su_pos = p.size;
    p.push(v.su);
  }
  p.contention = true;
  p.alarm_aware = ctx.policy->kind == PolicyKind::QZMAC_alarm;
  return p;
}

// Pure polling: the incumbent, then switch targets. With T_p=1 the first
// target is granted the slot untested.
inline Plan polling_plan(const View& v, const RankContext& ctx, const FrameLayout& layout) {
  const PolicyConfig& pol = *ctx.policy;
  Plan p;
  const bool limited =
      pol.kind == PolicyKind::KLEQ || pol.kind == PolicyKind::CyclicLimited;
  const bool forced = limited && pol.K != kInfiniteK && v.run >= pol.K;
  int exclude = v.incumbent;
  if (!forced) {
    p.push(v.incumbent);
    p.first_switch = 1;
  } else if (pol.kind == PolicyKind::KLEQ) {
    exclude = -1;  // the incumbent may be re-chosen
  }
  detail::append_ranked(p, v, ctx, layout.T_p + 1 - p.size, exclude);
  return p;
}

inline Plan make_plan(const View& v, const RankContext& ctx, const FrameLayout& layout, int n) {
  switch (ctx.policy->kind) {
    case PolicyKind::ZMAC: return zmac_plan(ctx.t, n);
    case PolicyKind::EZMAC: return ezmac_plan(v, ctx.t, n);
    case PolicyKind::QZMAC:
    case PolicyKind::QZMAC_alarm: return qzmac_plan(v, ctx, layout);
    default: return polling_plan(v, ctx, layout);
  }
}

// What a node believes happened during the slot.
struct Event {
  enum Kind : std::uint8_t { silent, polled_tx, contention_tx, contention_collision } kind =
      silent;
  int pos = -1;                 // plan position of the polled transmitter
  int node = -1;                // contention winner
  std::int64_t backlog_after = 0;  // transmitter backlog after the slot, from its header

  bool operator==(const Event&) const = default;
};

// Common-information update at the end of slot t.
inline void advance_view(View& v, const Plan& plan, const Event& e, const PolicyConfig& pol,
                         Slot t) {
  if (pol.kind == PolicyKind::ZMAC) return;
  if (pol.kind == PolicyKind::EZMAC) {
    if (e.kind == Event::contention_tx) v.su = e.node;
    return;
  }
  auto mark = [&](int q, std::int64_t seen) {
    v.last[static_cast<std::size_t>(q)] = t + 1;
    if (!v.residual.empty()) v.residual[static_cast<std::size_t>(q)] = seen;
  };
  const bool incumbent_tx = e.kind == Event::polled_tx && e.pos < plan.first_switch;
  const bool switch_tx = e.kind == Event::polled_tx && e.pos >= plan.first_switch &&
                         e.pos != plan.su_pos;
  if (incumbent_tx) {
    mark(v.incumbent, e.backlog_after);
    ++v.run;
    return;
  }
  if (plan.first_switch == 1 && !v.residual.empty())
    v.residual[static_cast<std::size_t>(v.incumbent)] = 0;  // found empty
  if (switch_tx) {
    v.incumbent = plan.at(e.pos);
    mark(v.incumbent, e.backlog_after);
    v.run = 1;
    return;
  }
  // No polled switch target transmitted: the first one was polled (or granted)
  // and found empty; it becomes the incumbent.
  if (plan.size > plan.first_switch && plan.first_switch != plan.su_pos) {
    v.incumbent = plan.at(plan.first_switch);
    mark(v.incumbent, 0);
    v.run = 0;
  }
  // The SU or a fresh contention winner transmitted: it takes over as the
  // incumbent and is served exhaustively from the next slot on.
  if (e.kind == Event::contention_tx || (e.kind == Event::polled_tx && e.pos == plan.su_pos)) {
    const int w = e.kind == Event::contention_tx ? e.node : plan.at(e.pos);
    if (e.kind == Event::contention_tx && pol.qzmac_family()) v.su = w;
    v.incumbent = w;
    mark(w, e.backlog_after);
    v.run = 1;
  }
}

}  // namespace hybridmac
