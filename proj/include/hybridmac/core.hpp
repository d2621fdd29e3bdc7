#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hybridmac {

using Slot = std::int64_t;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Noise sources. Each (source, lane) pair is an independent substream, so
// switching one source on or off never shifts the draws of another.
enum class Noise : std::uint32_t {
  arrival = 1,
  alarm_split = 2,
  fading = 3,
  backoff = 4,
  cca = 5,
  aux = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Counter-based generator: a draw is a pure function of
// (seed, source, lane, counter). There is no hidden state to advance.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t bits(Noise src, std::uint32_t lane, std::uint64_t counter) const {
    std::uint64_t key =
        splitmix64(seed_ ^ splitmix64((static_cast<std::uint64_t>(src) << 32) | lane));
    return splitmix64(key + counter * 0xD1B54A32D192ED03ull);
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform(Noise src, std::uint32_t lane, std::uint64_t counter) const {
    return static_cast<double>(bits(src, lane, counter) >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p, Noise src, std::uint32_t lane, std::uint64_t counter) const {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform(src, lane, counter) < p;
  }

  // Uniform integer in [0, n). n must be positive.
  std::uint32_t below(std::uint32_t n, Noise src, std::uint32_t lane,
                      std::uint64_t counter) const {
    unsigned __int128 m =
        static_cast<unsigned __int128>(bits(src, lane, counter)) * n;
    return static_cast<std::uint32_t>(m >> 64);
  }

 private:
  std::uint64_t seed_;
};

enum class PacketClass : std::uint8_t { data, alarm };

struct Packet {
  Slot arrival_slot = 0;
  int queue = 0;
  PacketClass cls = PacketClass::data;
};

inline Slot packet_delay(const Packet& p, Slot departure_slot) {
  return departure_slot - p.arrival_slot + 1;
}

struct ArrivalSpec {
  std::vector<double> rates;
  std::vector<double> alarm_fraction;  // empty means no alarms anywhere

  static ArrivalSpec symmetric(int n, double rate) {
    return ArrivalSpec{std::vector<double>(static_cast<std::size_t>(n), rate), {}};
  }

  int size() const { return static_cast<int>(rates.size()); }

  double alarm(int i) const {
    return alarm_fraction.empty() ? 0.0 : alarm_fraction[static_cast<std::size_t>(i)];
  }

  bool is_symmetric() const {
    for (double r : rates)
      if (r != rates.front()) return false;
    return true;
  }

  double total() const {
    double s = 0.0;
    for (double r : rates) s += r;
    return s;
  }

  void validate() const {
    if (rates.empty()) throw ConfigError("arrival rates: at least one queue required");
    for (std::size_t i = 0; i < rates.size(); ++i)
      if (!(rates[i] >= 0.0 && rates[i] < 1.0))
        throw ConfigError("arrival rate " + std::to_string(i) + " outside [0,1)");
    if (!alarm_fraction.empty()) {
      if (alarm_fraction.size() != rates.size())
        throw ConfigError("alarm_fraction length differs from rates length");
      for (double a : alarm_fraction)
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alarm fraction outside [0,1]");
    }
  }
};

enum class Arrival : std::uint8_t { none, data, alarm };

// Arrivals of slot t for every queue; out is resized to N.
inline void step_arrivals(const ArrivalSpec& spec, const Rng& rng, Slot t,
                          std::vector<Arrival>& out) {
  const int n = spec.size();
  out.assign(static_cast<std::size_t>(n), Arrival::none);
  const auto c = static_cast<std::uint64_t>(t);
  for (int i = 0; i < n; ++i) {
    const auto lane = static_cast<std::uint32_t>(i);
    if (!rng.bernoulli(spec.rates[static_cast<std::size_t>(i)], Noise::arrival, lane, c))
      continue;
    const double a = spec.alarm(i);
    out[static_cast<std::size_t>(i)] =
        (a > 0.0 && rng.bernoulli(a, Noise::alarm_split, lane, c)) ? Arrival::alarm
                                                                   : Arrival::data;
  }
}

inline std::vector<Arrival> step_arrivals(const ArrivalSpec& spec, const Rng& rng, Slot t) {
  std::vector<Arrival> out;
  step_arrivals(spec, rng, t, out);
  return out;
}

// Which packets a service opportunity may take.
enum class ServeClass : std::uint8_t { any, data, alarm };

struct QueueState {
  std::deque<Packet> data;
  std::deque<Packet> alarm;

  std::int64_t size() const { return static_cast<std::int64_t>(data.size() + alarm.size()); }
  bool empty() const { return data.empty() && alarm.empty(); }
  bool has(ServeClass c) const {
    switch (c) {
      case ServeClass::data: return !data.empty();
      case ServeClass::alarm: return !alarm.empty();
      default: return !empty();
    }
  }

  void push(const Packet& p) {
    (p.cls == PacketClass::alarm ? alarm : data).push_back(p);
  }
};

// Departure at the end of a slot. A faded transmission keeps the packet at
// the head of its FIFO.
inline std::optional<Packet> apply_service(QueueState& q, bool scheduled, bool channel_success,
                                           ServeClass cls = ServeClass::any) {
  if (!scheduled || !channel_success || !q.has(cls)) return std::nullopt;
  std::deque<Packet>* src = nullptr;
  if (cls == ServeClass::data) {
    src = &q.data;
  } else if (cls == ServeClass::alarm) {
    src = &q.alarm;
  } else if (q.data.empty()) {
    src = &q.alarm;
  } else if (q.alarm.empty()) {
    src = &q.data;
  } else {
    // FIFO across classes; alarms win ties.
    src = q.alarm.front().arrival_slot <= q.data.front().arrival_slot ? &q.alarm : &q.data;
  }
  Packet p = src->front();
  src->pop_front();
  return p;
}

struct CapacityReport {
  double load = 0.0;      // Σλ, or Σλ/p under fading
  bool interior = false;  // load < 1
  bool leq_region = false;  // interior and min λ > 0
};

inline CapacityReport capacity_check(const ArrivalSpec& spec,
                                     const std::optional<std::vector<double>>& fading = {}) {
  spec.validate();
  CapacityReport r;
  double min_rate = 1.0;
  for (int i = 0; i < spec.size(); ++i) {
    const double lam = spec.rates[static_cast<std::size_t>(i)];
    double p = 1.0;
    if (fading) {
      if (static_cast<int>(fading->size()) != spec.size())
        throw ConfigError("fading vector length differs from rates length");
      p = (*fading)[static_cast<std::size_t>(i)];
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("fading success probability outside [0,1]");
      if (p == 0.0 && lam > 0.0)
        throw ConfigError("queue " + std::to_string(i) + " has arrivals but zero channel success");
    }
    if (lam > 0.0) r.load += lam / p;
    if (lam < min_rate) min_rate = lam;
  }
  r.interior = r.load < 1.0;
  r.leq_region = r.interior && min_rate > 0.0;
  return r;
}

}  // namespace hybridmac
