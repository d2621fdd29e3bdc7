#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hybridmac/core.hpp"

namespace hybridmac {

struct FrameLayout {
  int T_a = 0;  // alarm minislots, 0 or 1
  int T_p = 1;  // poll-and-test minislots
  int T_c = 0;  // contention minislots

  int total() const { return T_a + T_p + T_c; }

  // 0-based index of the first contention minislot within the slot.
  int contention_offset() const { return T_a + T_p; }

  void validate() const {
    if (T_a != 0 && T_a != 1) throw ConfigError("T_a must be 0 or 1");
    if (T_p < 0 || T_c < 0) throw ConfigError("T_p and T_c must be nonnegative");
    if (T_p > 14) throw ConfigError("T_p above 14 is not supported");
  }
};

struct CcaModel {
  double p_miss = 0.0;
  static constexpr double p_fa = 0.0;
  static constexpr int max_misses_per_slot = 1;

  void validate() const {
    if (!(p_miss >= 0.0 && p_miss <= 1.0)) throw ConfigError("p_miss outside [0,1]");
  }
};

struct MissBudget {
  int remaining = CcaModel::max_misses_per_slot;
};

// One busy minislot heard by `listeners` nodes. With probability
// 1-(1-p_miss)^listeners a miss happens, charged to one uniformly chosen
// listener (returned as an index into the listener list).
inline std::optional<int> inject_miss(int listeners, const CcaModel& model, const Rng& rng,
                                      std::uint64_t counter, MissBudget& budget) {
  if (listeners <= 0 || budget.remaining <= 0 || model.p_miss <= 0.0) return std::nullopt;
  const double p_any =
      model.p_miss >= 1.0 ? 1.0 : -std::expm1(listeners * std::log1p(-model.p_miss));
  if (!rng.bernoulli(p_any, Noise::cca, 0, 2 * counter)) return std::nullopt;
  --budget.remaining;
  return static_cast<int>(rng.below(static_cast<std::uint32_t>(listeners), Noise::cca, 1,
                                    2 * counter + 1));
}

enum class Sensed : std::uint8_t { busy, clear };

inline Sensed cca_sense(bool true_busy, const CcaModel& model, const Rng& rng,
                        std::uint64_t counter, MissBudget& budget) {
  if (!true_busy) return Sensed::clear;
  return inject_miss(1, model, rng, counter, budget) ? Sensed::clear : Sensed::busy;
}

// Backoff draws live on the backoff substream of each node; `phase`
// separates independent contentions that share a slot index.
inline int draw_backoff(const Rng& rng, int node, int T_c, Slot t, int phase) {
  return static_cast<int>(rng.below(static_cast<std::uint32_t>(T_c), Noise::backoff,
                                    static_cast<std::uint32_t>(node),
                                    static_cast<std::uint64_t>(t) * 4u +
                                        static_cast<std::uint64_t>(phase)));
}

struct ContentionResult {
  enum Kind : std::uint8_t { silent, winner, collision } kind = silent;
  int node = -1;     // the winner when kind == winner
  int backoff = -1;  // 0-based contention minislot where the first transmission began
  std::vector<int> transmitters;
};

// Contention over T_c minislots. The unique earliest backoff wins; a tie at
// the minimum collides. Later contenders sense the ongoing transmission, and a
// CCA miss among them also produces a collision.
inline ContentionResult run_contention(const std::vector<int>& contenders, int T_c,
                                       const Rng& rng, Slot t, int phase = 0,
                                       const CcaModel& cca = {}, MissBudget* budget = nullptr,
                                       std::uint64_t cca_counter = 0) {
  ContentionResult r;
  if (contenders.empty() || T_c <= 0) return r;
  int best = T_c;
  std::vector<int> draws(contenders.size());
  for (std::size_t k = 0; k < contenders.size(); ++k) {
    draws[k] = draw_backoff(rng, contenders[k], T_c, t, phase);
    best = std::min(best, draws[k]);
  }
  std::vector<int> later;
  for (std::size_t k = 0; k < contenders.size(); ++k) {
    if (draws[k] == best)
      r.transmitters.push_back(contenders[k]);
    else
      later.push_back(contenders[k]);
  }
  r.backoff = best;
  if (budget && !later.empty()) {
    if (auto m = inject_miss(static_cast<int>(later.size()), cca, rng, cca_counter, *budget))
      r.transmitters.push_back(later[static_cast<std::size_t>(*m)]);
  }
  if (r.transmitters.size() == 1) {
    r.kind = ContentionResult::winner;
    r.node = r.transmitters.front();
  } else {
    r.kind = ContentionResult::collision;
  }
  return r;
}

enum class Outcome : std::uint8_t { success, collision, idle_wasted, reset_activity };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::collision: return "collision";
    case Outcome::idle_wasted: return "idle_wasted";
    default: return "reset_activity";
  }
}

struct SlotOutcome {
  std::optional<int> transmitter;  // set when exactly one node transmitted
  Outcome outcome = Outcome::idle_wasted;
  int minislots_consumed = 0;
  bool contention_entered = false;
  bool alarm_mode = false;
  bool departed = false;           // the transmission delivered a packet
  bool faded = false;              // single transmitter lost to fading
  std::optional<int> scheduled;    // the queue granted the slot, if any
  std::vector<int> transmitters;   // every node that put energy on the data portion
  int cca_misses = 0;
};

}  // namespace hybridmac
