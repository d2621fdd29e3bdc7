#include <gtest/gtest.h>

#include <cmath>

#include "hybridmac/verify.hpp"

using namespace hybridmac;

TEST(Gxd1, ClosedForm) {
  EXPECT_DOUBLE_EQ(gxd1_delay(10, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(gxd1_delay(10, 0.05), 1.45);
  EXPECT_DOUBLE_EQ(gxd1_delay(1, 0.5), 1.0);  // a single Bernoulli queue never waits
  EXPECT_GT(gxd1_delay(10, 0.0999), 400.0);
  EXPECT_THROW(gxd1_delay(10, 0.1), ConfigError);
  EXPECT_THROW(gxd1_delay(0, 0.1), ConfigError);
}

TEST(ValueIteration, TwoQueuesPickTheOther) {
  MdpOptions o;
  o.n = 2;
  auto T = value_iteration(o);
  EXPECT_TRUE(T.converged);
  auto c = check_argmax_policy(T, 2);
  EXPECT_GT(c.states, 0);
  EXPECT_EQ(c.matched, c.states);
  EXPECT_EQ(c.monotone_violations, 0);
  EXPECT_LE(T.worst_contraction, o.alpha + 1e-6);
}

TEST(ValueIteration, ThreeQueuesArgmaxAwayFromTruncation) {
  MdpOptions o;
  o.n = 3;
  o.q_max = 20;
  o.v_max = 24;
  auto T = value_iteration(o);
  ASSERT_TRUE(T.converged);
  auto c = check_argmax_policy(T, 2, 12);
  EXPECT_GT(c.states, 50);
  EXPECT_EQ(c.matched, c.states);
  EXPECT_EQ(c.monotone_violations, 0);
}

TEST(ValueIteration, AllowingStayChangesNothingAtZeroCost) {
  MdpOptions a;
  a.n = 2;
  a.q_max = 15;
  a.v_max = 15;
  MdpOptions b = a;
  b.allow_stay = true;
  auto Ta = value_iteration(a), Tb = value_iteration(b);
  for (std::size_t k = 0; k < Ta.J.size(); ++k) ASSERT_NEAR(Ta.J[k], Tb.J[k], 1e-6);
}

TEST(ValueIteration, RejectsBadOptions) {
  MdpOptions o;
  o.n = 4;
  EXPECT_THROW(value_iteration(o), ConfigError);
  o.n = 2;
  o.alpha = 1.0;
  EXPECT_THROW(value_iteration(o), ConfigError);
  o.alpha = 0.9;
  o.lambda = 0.5;
  EXPECT_THROW(value_iteration(o), ConfigError);
}

TEST(Dominance, SelfComparisonIsIdentical) {
  auto c = make_config(PolicyKind::CyclicExhaustive, ArrivalSpec::symmetric(3, 0.2), {0, 1, 0});
  auto r = coupled_dominance_test(c, c, 1, 50, 500, 50);
  EXPECT_TRUE(r.identical);
  EXPECT_EQ(r.violations, 0);
}

TEST(Dominance, ExhaustiveBeatsOnePerVisit) {
  auto a = make_config(PolicyKind::CyclicExhaustive, ArrivalSpec::symmetric(3, 0.2), {0, 1, 0});
  PolicyConfig k1;
  k1.K = 1;
  auto b = make_config(PolicyKind::CyclicLimited, ArrivalSpec::symmetric(3, 0.2), {0, 1, 0}, k1);
  auto r = coupled_dominance_test(a, b, 1, 1000, 2000, 100);
  EXPECT_EQ(r.violations, 0);
  EXPECT_FALSE(r.identical);
  EXPECT_LE(r.mean_a.back(), r.mean_b.back());
}

TEST(Drift, CyclicNegativeOutsideAndPositiveWhenOverloaded) {
  DriftOptions o;
  o.threshold = 50;
  o.episodes = 100;
  auto stable = make_config(PolicyKind::CyclicExhaustive, ArrivalSpec{{0.5, 0.3}, {}}, {0, 1, 0});
  auto s = drift_estimate(stable, o);
  EXPECT_GT(s.samples, 100);
  EXPECT_LT(s.upper(), 0.0);
  auto over = make_config(PolicyKind::CyclicExhaustive, ArrivalSpec{{0.6, 0.5}, {}}, {0, 1, 0});
  auto u = drift_estimate(over, o);
  EXPECT_GT(u.lower(), 0.0);
}

TEST(Drift, KleqQuadraticNegative) {
  PolicyConfig k3;
  k3.K = 3;
  const std::vector<double> rates{0.4, 0.4};
  auto c = make_config(PolicyKind::KLEQ, ArrivalSpec{rates, {}}, {0, 1, 0}, k3);
  DriftOptions o;
  o.kind = Lyapunov::kleq_quadratic;
  o.threshold = kleq_drift_threshold(rates, 3);
  EXPECT_TRUE(std::isfinite(o.threshold));
  o.episodes = 100;
  auto r = drift_estimate(c, o);
  EXPECT_GT(r.samples, 100);
  EXPECT_LT(r.upper(), 0.0);
  EXPECT_TRUE(std::isinf(kleq_drift_threshold({0.5, 0.5}, 3)));
}
