#include <gtest/gtest.h>

#include "hybridmac/run.hpp"

using namespace hybridmac;

namespace {

std::vector<std::vector<Arrival>> arrival_path(const SimConfig& cfg, std::uint64_t seed, Slot T) {
  Simulation sim(cfg, seed);
  std::vector<std::vector<Arrival>> path;
  for (Slot t = 0; t < T; ++t) {
    sim.step();
    path.push_back(sim.last_arrivals());
  }
  return path;
}

}  // namespace

TEST(Simulator, SameSeedSameTrace) {
  auto cfg = make_config(PolicyKind::QZMAC, ArrivalSpec::symmetric(6, 0.12), {0, 3, 7});
  cfg.cca.p_miss = 0.01;
  Simulation a(cfg, 42), b(cfg, 42), c(cfg, 43);
  bool differs = false;
  for (Slot t = 0; t < 20000; ++t) {
    const auto& oa = a.step();
    const auto& ob = b.step();
    c.step();
    ASSERT_EQ(oa.transmitters, ob.transmitters);
    ASSERT_EQ(oa.minislots_consumed, ob.minislots_consumed);
    ASSERT_EQ(a.total_backlog(), b.total_backlog());
    differs = differs || a.total_backlog() != c.total_backlog();
  }
  EXPECT_TRUE(differs);
}

TEST(Simulator, ArrivalPathsSharedAcrossPoliciesAndChannels) {
  auto base = make_config(PolicyKind::QZMAC, ArrivalSpec::symmetric(5, 0.15), {0, 3, 7});
  auto other = make_config(PolicyKind::TDMA, ArrivalSpec::symmetric(5, 0.15), {0, 0, 0});
  auto noisy = base;
  noisy.cca.p_miss = 0.05;
  noisy.fading = std::vector<double>(5, 0.9);
  const auto p = arrival_path(base, 9, 5000);
  EXPECT_EQ(p, arrival_path(other, 9, 5000));
  EXPECT_EQ(p, arrival_path(noisy, 9, 5000));
}

TEST(Simulator, PerQueueConservation) {
  auto cfg = make_config(PolicyKind::EZMAC, ArrivalSpec{{0.1, 0.3, 0.2}, {}}, {0, 2, 8});
  cfg.fading = std::vector<double>{0.9, 0.8, 1.0};
  Simulation sim(cfg, 2);
  std::vector<std::int64_t> arrived(3, 0), left(3, 0);
  for (Slot t = 0; t < 50000; ++t) {
    sim.step();
    for (int i = 0; i < 3; ++i) arrived[static_cast<std::size_t>(i)] += sim.last_arrivals()[static_cast<std::size_t>(i)] != Arrival::none;
    if (sim.last_departure()) ++left[static_cast<std::size_t>(sim.last_departure()->queue)];
  }
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(arrived[static_cast<std::size_t>(i)] - left[static_cast<std::size_t>(i)], sim.backlog(i));
    EXPECT_EQ(sim.backlog(i), sim.queues()[static_cast<std::size_t>(i)].size());
  }
}

TEST(Simulator, FadedTransmissionKeepsHeadOfLine) {
  auto cfg = make_config(PolicyKind::TDMA, ArrivalSpec::symmetric(1, 0.0), {0, 0, 0});
  cfg.fading = std::vector<double>{0.5};
  Simulation sim(cfg, 3);
  sim.inject(0, 1, 0);
  sim.inject(0, 1, 1);
  int fades = 0;
  while (!sim.step().departed) {
    EXPECT_TRUE(sim.last_outcome().faded);
    ++fades;
  }
  EXPECT_EQ(sim.last_departure()->arrival_slot, 0);
  EXPECT_EQ(packet_delay(*sim.last_departure(), sim.now() - 1), fades + 1);
}

TEST(Simulator, FirstSlotArrivalsOptional) {
  auto cfg = make_config(PolicyKind::Oracle, ArrivalSpec::symmetric(3, 0.999), {0, 0, 0});
  Simulation with(cfg, 1);
  with.step();
  EXPECT_GT(with.last_backlog(), 0);
  cfg.arrivals_at_zero = false;
  Simulation without(cfg, 1);
  without.step();
  EXPECT_EQ(without.last_backlog(), 0);
}

TEST(Simulator, ConfigValidation) {
  auto cfg = make_config(PolicyKind::QZMAC, ArrivalSpec::symmetric(3, 0.1), {0, 2, 7});
  EXPECT_THROW(Simulation(cfg, 1), ConfigError);
  cfg.layout = {0, 3, 1};
  cfg.cca.p_miss = 1e-3;
  EXPECT_THROW(Simulation(cfg, 1), ConfigError);
  cfg.layout = {0, 3, 2};
  EXPECT_NO_THROW(Simulation(cfg, 1));
  cfg.fading = std::vector<double>{0.5, 0.5};
  EXPECT_THROW(Simulation(cfg, 1), ConfigError);
  PolicyConfig k0;
  k0.K = 0;
  EXPECT_THROW(Simulation(make_config(PolicyKind::KLEQ, ArrivalSpec::symmetric(2, 0.1), {0, 1, 0}, k0), 1),
               ConfigError);
}

TEST(Simulator, OutcomeTraceConsistency) {
  auto cfg = make_config(PolicyKind::QZMAC, ArrivalSpec::symmetric(8, 0.11), {0, 3, 7});
  Simulation sim(cfg, 6);
  for (Slot t = 0; t < 50000; ++t) {
    const auto& o = sim.step();
    switch (o.outcome) {
      case Outcome::success:
        ASSERT_TRUE(o.departed);
        ASSERT_EQ(o.transmitters.size(), 1u);
        ASSERT_EQ(o.transmitter, o.transmitters.front());
        break;
      case Outcome::collision:
        ASSERT_GE(o.transmitters.size(), 2u);
        ASSERT_TRUE(o.contention_entered);  // perfect sensing: only contention collides
        break;
      case Outcome::idle_wasted:
        ASSERT_TRUE(o.transmitters.empty());
        ASSERT_EQ(o.minislots_consumed, 10);
        break;
      default: FAIL();
    }
    if (!o.contention_entered) ASSERT_LE(o.minislots_consumed, 3);
  }
}

TEST(Simulator, InjectAndTimeShift) {
  auto cfg = make_config(PolicyKind::Oracle, ArrivalSpec::symmetric(2, 0.0), {0, 0, 0});
  Simulation sim(cfg, 1);
  sim.set_time(100);
  sim.inject(1, 3, 90);
  EXPECT_EQ(sim.total_backlog(), 3);
  sim.step();
  EXPECT_EQ(sim.now(), 101);
  EXPECT_EQ(packet_delay(*sim.last_departure(), 100), 11);
}
