#pragma once

#include <functional>

#include "hybridmac/metrics.hpp"
#include "hybridmac/simulator.hpp"

namespace hybridmac {

using SlotHook = std::function<void(const Simulation&)>;

// Runs `horizon` slots (warm-up included) and returns the post-warm-up metrics.
inline MetricsAccumulator simulate(const SimConfig& cfg, std::uint64_t seed, Slot horizon,
                                   const MetricsOptions& opt = {}, const SlotHook& hook = {},
                                   AlignmentStats* alignment = nullptr) {
  Simulation sim(cfg, seed);
  MetricsAccumulator acc(cfg.n(), opt);
  for (Slot k = 0; k < horizon; ++k) {
    const SlotOutcome& out = sim.step();
    std::int64_t arrivals = 0;
    for (auto a : sim.last_arrivals()) arrivals += a != Arrival::none;
    acc.observe(sim.now() - 1, sim.last_backlog(), arrivals, out, sim.last_departure());
    if (hook) hook(sim);
  }
  if (alignment) *alignment = sim.alignment();
  return acc;
}

inline SimConfig make_config(PolicyKind kind, ArrivalSpec arrivals, FrameLayout layout,
                             PolicyConfig base = {}) {
  SimConfig c;
  c.arrivals = std::move(arrivals);
  c.policy = base;
  c.policy.kind = kind;
  c.layout = layout;
  return c;
}

}  // namespace hybridmac
