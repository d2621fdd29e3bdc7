#pragma once

// Randomized invariant checks shared by the unit tests and the acceptance run.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hybridmac/run.hpp"

namespace hybridmac::props {

struct Tally {
  std::int64_t checked = 0;
  std::int64_t failed = 0;
  std::string first_failure;
};

struct Report {
  int cases = 0;
  std::map<std::string, Tally> by_property;

  void check(const std::string& name, bool ok, const std::string& what) {
    auto& t = by_property[name];
    ++t.checked;
    if (!ok) {
      if (t.failed++ == 0) t.first_failure = what;
    }
  }

  std::int64_t failures() const {
    std::int64_t f = 0;
    for (const auto& [_, t] : by_property) f += t.failed;
    return f;
  }
};

struct Case {
  SimConfig cfg;
  std::uint64_t seed = 0;
  Slot horizon = 0;
  double load = 0.0;  // Σλ/p
  bool stable_hint = false;

  std::string describe() const {
    std::ostringstream os;
    os << to_string(cfg.policy.kind) << " N=" << cfg.n() << " load=" << load
       << " T=(" << cfg.layout.T_a << "," << cfg.layout.T_p << "," << cfg.layout.T_c << ")"
       << " K=" << cfg.policy.K << " p_miss=" << cfg.cca.p_miss
       << (cfg.fading ? " fading" : "") << " seed=" << seed;
    return os.str();
  }
};

inline Case random_case(std::mt19937_64& gen, std::uint64_t idx) {
  static const PolicyKind kinds[] = {
      PolicyKind::Oracle,          PolicyKind::PriorityOracle, PolicyKind::TDMA,
      PolicyKind::ZMAC,            PolicyKind::EZMAC,          PolicyKind::QZMAC,
      PolicyKind::LEQ_exact,       PolicyKind::LEQ_estimated,  PolicyKind::CyclicExhaustive,
      PolicyKind::CyclicDeviating, PolicyKind::CyclicLimited,  PolicyKind::KLEQ,
      PolicyKind::GKLS,            PolicyKind::QZMAC_alarm};
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen); };

  Case c;
  c.seed = 1000 + idx;
  c.horizon = 8000;
  SimConfig& s = c.cfg;
  s.policy.kind = kinds[pick(0, static_cast<int>(std::size(kinds)) - 1)];
  const int n = pick(2, 8);
  s.policy.K = pick(1, 6);
  if (s.policy.uses_residuals() || s.policy.kind == PolicyKind::CyclicLimited)
    if (pick(0, 4) == 0) s.policy.K = s.policy.kind == PolicyKind::GKLS ? 8 : kInfiniteK;
  s.policy.deviation_k = pick(0, 30);
  if (s.policy.qzmac_family()) {
    const int sel = pick(0, 2);
    s.policy.selection = static_cast<Selection>(sel);
  }

  s.layout.T_a = s.policy.kind == PolicyKind::QZMAC_alarm ? 1 : 0;
  s.layout.T_p = s.policy.min_T_p() + pick(0, 2);
  const bool contends = s.policy.kind == PolicyKind::ZMAC || s.policy.kind == PolicyKind::EZMAC ||
                        s.policy.qzmac_family();
  s.layout.T_c = contends ? pick(s.policy.kind == PolicyKind::QZMAC_alarm ? 2 : 1, 9) : 0;

  const double load = uni(0.05, 0.95);
  std::vector<double> w(static_cast<std::size_t>(n));
  double sw = 0.0;
  for (auto& x : w) sw += (x = uni(0.2, 1.0));
  for (auto& x : w) s.arrivals.rates.push_back(load * x / sw);
  if (s.policy.kind == PolicyKind::QZMAC_alarm || s.policy.kind == PolicyKind::PriorityOracle ||
      pick(0, 5) == 0)
    s.arrivals.alarm_fraction.assign(static_cast<std::size_t>(n), uni(0.0, 0.4));

  c.load = load;
  if (pick(0, 4) == 0) {
    std::vector<double> p(static_cast<std::size_t>(n));
    for (auto& x : p) x = uni(0.85, 1.0);
    s.fading = p;
    c.load = capacity_check(s.arrivals, s.fading).load;
  }
  if (s.policy.distributed() && pick(0, 3) == 0) {
    s.cca.p_miss = pick(0, 1) ? 1e-3 : 2e-2;
    s.layout.T_c = std::max(s.layout.T_c, pick(2, 5));
  }

  double max_rate = 0.0;
  for (double r : s.arrivals.rates) max_rate = std::max(max_rate, r);
  c.stable_hint = c.load <= 0.7 && s.policy.kind != PolicyKind::AlwaysIdle &&
                  (s.policy.kind != PolicyKind::TDMA || max_rate * n <= 0.7);
  return c;
}

inline std::uint64_t mix(std::uint64_t h, std::uint64_t x) {
  return splitmix64(h ^ (x + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2)));
}

inline std::uint64_t outcome_hash(const Simulation& sim, std::uint64_t h) {
  const SlotOutcome& o = sim.last_outcome();
  h = mix(h, static_cast<std::uint64_t>(o.outcome));
  h = mix(h, static_cast<std::uint64_t>(o.transmitter.value_or(-1) + 1));
  h = mix(h, static_cast<std::uint64_t>(o.minislots_consumed));
  h = mix(h, static_cast<std::uint64_t>(sim.total_backlog()));
  return h;
}

inline bool exhaustive_class(const SimConfig& s) {
  switch (s.policy.kind) {
    case PolicyKind::CyclicExhaustive:
    case PolicyKind::CyclicDeviating:
    case PolicyKind::LEQ_exact:
    case PolicyKind::LEQ_estimated:
    case PolicyKind::QZMAC: return !s.fading && s.cca.p_miss == 0.0;
    default: return false;
  }
}

// Idle implies an empty system for the oracles and for every protocol that
// falls back to contention among all nonempty nodes.
inline bool non_idling_class(const SimConfig& s) {
  if (s.fading || s.cca.p_miss > 0.0) return false;
  switch (s.policy.kind) {
    case PolicyKind::Oracle:
    case PolicyKind::PriorityOracle: return true;
    case PolicyKind::ZMAC:
    case PolicyKind::EZMAC:
    case PolicyKind::QZMAC:
    case PolicyKind::QZMAC_alarm: return s.layout.T_c >= 1;
    default: return false;
  }
}

inline void check_case(const Case& c, Report& rep) {
  const std::string who = c.describe();
  const SimConfig& s = c.cfg;
  const int n = s.n();
  Simulation sim(s, c.seed);
  MetricsOptions mo;
  mo.warmup = 1000;
  mo.window = 1000;
  mo.jain_trace = c.horizon;
  MetricsAccumulator acc(n, mo);

  std::uint64_t h = 0;
  std::int64_t prev_total = 0;
  double q_sum = 0.0, delay_sum = 0.0;
  bool conserve = true, delays_ok = true, single_ok = true, minislot_ok = true;
  bool aligned_ok = true, exhaustive_ok = true, idle_ok = true;
  std::string note;
  for (Slot t = 0; t < c.horizon; ++t) {
    const SlotOutcome& o = sim.step();
    std::int64_t arrivals = 0;
    for (auto a : sim.last_arrivals()) arrivals += a != Arrival::none;
    const auto& dep = sim.last_departure();
    if (sim.last_backlog() != prev_total + arrivals) conserve = false;
    if (sim.total_backlog() != sim.last_backlog() - (dep ? 1 : 0)) conserve = false;
    prev_total = sim.total_backlog();
    q_sum += static_cast<double>(sim.last_backlog());
    if (dep) {
      const Slot d = packet_delay(*dep, t);
      delays_ok = delays_ok && d >= 1;
      delay_sum += static_cast<double>(d);
      single_ok = single_ok && o.departed && o.transmitters.size() == 1 && o.transmitter;
    }
    if (o.outcome == Outcome::collision) single_ok = single_ok && o.transmitters.size() >= 2;
    if (o.minislots_consumed < 0 || o.minislots_consumed > s.layout.total()) minislot_ok = false;
    if (!o.contention_entered && o.minislots_consumed > s.layout.T_a + s.layout.T_p)
      minislot_ok = false;
    if (s.policy.distributed() && s.cca.p_miss == 0.0 && sim.info().divergent != 0)
      aligned_ok = false;
    if (exhaustive_class(s) && !o.alarm_mode && sim.last_incumbent_backlog() > 0 &&
        !(o.departed && o.transmitter == sim.last_incumbent())) {
      if (exhaustive_ok) note = "t=" + std::to_string(t);
      exhaustive_ok = false;
    }
    if (non_idling_class(s) && o.transmitters.empty() && sim.last_backlog() > 0) idle_ok = false;
    acc.observe(t, sim.last_backlog(), arrivals, o, dep);
    h = outcome_hash(sim, h);
  }
  // Packets still queued contribute their age at the end of the run.
  double residual = 0.0;
  for (const auto& q : sim.queues()) {
    for (const auto& p : q.data) residual += static_cast<double>(c.horizon - p.arrival_slot);
    for (const auto& p : q.alarm) residual += static_cast<double>(c.horizon - p.arrival_slot);
  }

  rep.check("conservation", conserve, who);
  rep.check("delay_at_least_one", delays_ok, who);
  rep.check("single_success", single_ok, who);
  rep.check("minislot_accounting", minislot_ok, who);
  rep.check("little_sample_path", std::abs(q_sum - (delay_sum + residual)) < 0.5, who);
  if (s.policy.distributed() && s.cca.p_miss == 0.0) rep.check("v_consistency_exact", aligned_ok, who);
  if (s.policy.distributed() && s.cca.p_miss > 0.0) {
    const auto& al = sim.alignment();
    // K-limited rules also leave a misaligned run at their forced switch, so
    // only the exhaustive family must rely on RESET.
    const bool limited = s.policy.kind == PolicyKind::KLEQ ||
                         s.policy.kind == PolicyKind::CyclicLimited;
    if (!limited) rep.check("v_consistency_repair", al.ended_otherwise == 0, who);
    const bool closed = al.open_since < 0 || c.horizon - al.open_since <= 200;
    rep.check("misalignment_terminates", closed, who);
  }
  if (exhaustive_class(s)) rep.check("exhaustive_membership", exhaustive_ok, who + " " + note);
  if (non_idling_class(s)) rep.check("non_idling", idle_ok, who);

  if (acc.departures() > 0) {
    bool jain_ok = true;
    for (double j : acc.jain_trace())
      if (j != 0.0 && (j < 1.0 / n - 1e-12 || j > 1.0 + 1e-12)) jain_ok = false;
    rep.check("jain_bounds", jain_ok, who);
  }
  if (c.stable_hint && acc.departures() > 200 && acc.arrivals() > 0) {
    const double w = acc.mean_delay(), l = acc.little_law_delay_empirical();
    rep.check("little_estimator_2pct", std::abs(w - l) <= 0.02 * w,
              who + " W=" + std::to_string(w) + " L=" + std::to_string(l));
  }

  // Same seed, same configuration: same slot-by-slot record.
  Simulation again(s, c.seed);
  std::uint64_t h2 = 0;
  for (Slot t = 0; t < c.horizon; ++t) {
    again.step();
    h2 = outcome_hash(again, h2);
  }
  rep.check("determinism", h == h2, who);
}

inline Report run_suite(int cases, std::uint64_t master_seed = 20240601) {
  Report rep;
  std::mt19937_64 gen(master_seed);
  for (int k = 0; k < cases; ++k) {
    check_case(random_case(gen, static_cast<std::uint64_t>(k)), rep);
    ++rep.cases;
  }
  return rep;
}

}  // namespace hybridmac::props
