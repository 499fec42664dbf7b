#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "degenflow/error.hpp"
#include "degenflow/metastability.hpp"
#include "degenflow/sde.hpp"
#include "degenflow/spectral.hpp"
#include "degenflow/stats.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace degenflow;
using degenflow::testing::constant_coefficients;

namespace {

Model layer_cylinder(const BoundaryCoefficients& bc, double delta = 0.4, double height = 1.0) {
  std::vector<BoundarySpec> b(2);
  b[0].coefficients = bc;
  InteriorSpec in;
  in.delta = delta;
  in.height = height;
  return Model::build(GeometryKind::Cylinder, b, in);
}

}  // namespace

TEST(Rng, StreamsAreReproducible) {
  auto a = derive_path_rng(42, 7);
  auto b = derive_path_rng(42, 7);
  auto c = derive_path_rng(42, 8);
  int same = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.bits();
    EXPECT_EQ(x, b.bits());
    same += x == c.bits();
  }
  EXPECT_EQ(same, 0);
}

TEST(Rng, NormalMoments) {
  auto r = derive_path_rng(1, 0);
  std::vector<double> x(200000);
  for (auto& v : x) v = r.normal();
  const auto s = summarize(x);
  EXPECT_NEAR(s.mean, 0.0, 0.01);
  EXPECT_NEAR(s.variance, 1.0, 0.01);
}

TEST(Rng, NeighbouringStreamsUncorrelated) {
  double sxy = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto a = derive_path_rng(9, 2 * i);
    auto b = derive_path_rng(9, 2 * i + 1);
    sxy += a.normal() * b.normal();
  }
  EXPECT_NEAR(sxy / n, 0.0, 4.0 / std::sqrt(n));
}

TEST(SimConfig, RejectsCrossedThresholds) {
  const auto m = layer_cylinder(BoundaryCoefficients{});
  SimConfig c;
  c.eps = 0.1;
  c.c_micro = 10.0;
  EXPECT_THROW(c.validate(m), Error);
  c.c_micro = 1.0;
  EXPECT_NO_THROW(c.validate(m));
  c.dt = -1.0;
  EXPECT_THROW(c.validate(m), Error);
}

TEST(SimConfig, ChartSelection) {
  const auto m = layer_cylinder(BoundaryCoefficients{});
  SimConfig c;
  c.eps = 1e-3;
  EXPECT_EQ(state_on_tube(m, 0, 0.0, 5e-3, c).chart, Chart::Micro);
  EXPECT_EQ(state_on_tube(m, 0, 0.0, 0.05, c).chart, Chart::Log);
  EXPECT_EQ(state_on_tube(m, 0, 0.0, 0.3, c).chart, Chart::Tube);
  EXPECT_EQ(state_at(m, {1.0, 0.5}, c).chart, Chart::Interior);
  EXPECT_THROW(state_on_tube(m, 0, 0.0, -0.1, c), Error);
  c.eps = 0.0;
  EXPECT_EQ(state_on_tube(m, 0, 0.0, 5e-3, c).chart, Chart::Log);
}

TEST(Simulator, StartOnTargetTakesNoTime) {
  const auto bc = constant_coefficients(1.0, 0.5);
  const auto m = layer_cylinder(bc);
  const auto sol = solve_gamma(bc, 64);
  const auto level = gamma_level_set(m, 0, 0.1, sol);
  SimConfig c;
  c.eps = 1e-2;
  const Simulator sim(m, c);
  auto rng = derive_path_rng(1, 1);
  const auto out = sim.first_hit(state_on_tube(m, 0, 1.0, 0.1, c), {Target::level_set(level)}, rng);
  EXPECT_EQ(out.reason, StopReason::HitTarget);
  EXPECT_EQ(out.time, 0.0);
}

TEST(Simulator, LogChartIncrementMoments) {
  // ln z increments: mean (beta - alpha) dt, variance 2 alpha dt.
  const double alpha = 1.3, beta = 0.4;
  const auto m = layer_cylinder(constant_coefficients(alpha, beta));
  SimConfig c;
  c.eps = 0.0;
  c.refine_levels = 0;
  const Simulator sim(m, c);
  const double dt = sim.chart_dt(Chart::Log);
  std::vector<double> inc(40000);
  for (std::size_t i = 0; i < inc.size(); ++i) {
    auto rng = derive_path_rng(3, i);
    auto s = state_on_tube(m, 0, 0.5, 1e-3, c);
    ASSERT_EQ(s.chart, Chart::Log);
    sim.step(s, rng);
    inc[i] = std::log(s.z) - std::log(1e-3);
  }
  const auto st = summarize(inc);
  EXPECT_NEAR(st.mean, (beta - alpha) * dt, 4.0 * st.std_error);
  EXPECT_NEAR(st.variance / (2.0 * alpha * dt), 1.0, 0.03);
}

TEST(Simulator, MicroChartIncrementVariance) {
  const double alpha = 1.0, beta = 0.5, rho = 0.7, eps = 1e-2, u0 = 3.0;
  const auto m = layer_cylinder(constant_coefficients(alpha, beta, rho));
  SimConfig c;
  c.eps = eps;
  const Simulator sim(m, c);
  const double dt = sim.chart_dt(Chart::Micro);
  std::vector<double> inc(40000);
  for (std::size_t i = 0; i < inc.size(); ++i) {
    auto rng = derive_path_rng(4, i);
    auto s = state_on_tube(m, 0, 0.5, u0 * eps, c);
    ASSERT_EQ(s.chart, Chart::Micro);
    sim.step(s, rng);
    inc[i] = s.z / eps - u0;
  }
  const auto st = summarize(inc);
  EXPECT_NEAR(st.mean, beta * u0 * dt, 4.0 * st.std_error);
  EXPECT_NEAR(st.variance / (2.0 * (alpha * u0 * u0 + rho) * dt), 1.0, 0.03);
}

TEST(Simulator, ReflectionKeepsOneSidedState) {
  const auto m = layer_cylinder(constant_coefficients(1.0, 0.5));
  SimConfig c;
  c.eps = 1e-2;
  const Simulator sim(m, c);
  bool below = false;
  const StepObserver obs = [&](const PathState& s, double) {
    if (s.in_tube && s.z < 0.0) below = true;
    if (!m.in_domain(s.point)) below = true;
  };
  for (int i = 0; i < 20; ++i) {
    auto rng = derive_path_rng(5, i);
    const auto out = sim.run_reflected(state_on_tube(m, 0, 0.0, 0.0, c), 20.0, rng, &obs);
    EXPECT_EQ(out.reason, StopReason::EndTime);
    EXPECT_NEAR(out.terminal.t, 20.0, 1e-9);
  }
  EXPECT_FALSE(below);
}

TEST(Simulator, PinnedAngleBecomesUniform) {
  // eps = 0 on S: only theta moves, as a rotating Brownian motion.
  auto bc = constant_coefficients(1.0, 0.5);
  bc.b = FourierSeries(0.7);
  const auto m = layer_cylinder(bc);
  SimConfig c;
  const Simulator sim(m, c);
  std::vector<double> th(2000);
  for (std::size_t i = 0; i < th.size(); ++i) {
    auto rng = derive_path_rng(6, i);
    const auto out = sim.run_reflected(state_on_tube(m, 0, 1.0, 0.0, c), 15.0, rng);
    ASSERT_EQ(out.terminal.z, 0.0);
    th[i] = out.terminal.theta;
  }
  const double a2 = anderson_darling(th, [](double x) { return x / kTwoPi; });
  EXPECT_LT(a2, kAndersonDarling1Percent);
}

TEST(Simulator, ExitProbabilityMatchesScaleFunction) {
  // Finite-eps oracle: P(Gamma_kappa before the z_hit band) from scale-function quadrature.
  const double alpha = 1.0, beta = 0.5, rho = 0.5, eps = 1e-2, kappa = 0.1, zeta = kappa / 4.0;
  const auto bc = constant_coefficients(alpha, beta, rho);
  const auto m = layer_cylinder(bc);
  const auto sol = solve_gamma(bc, 64);
  SimConfig c;
  c.eps = eps;
  const auto est = estimate_exit_prob(m, c, 0, sol, zeta, kappa, 20000, RunOptions{17, 1});
  const double expected = oracle::layer_exit_probability(alpha, beta, rho, c.z_hit, zeta / eps, kappa / eps);
  EXPECT_EQ(est.budget_exhausted, 0u);
  EXPECT_NEAR(est.to_level.estimate, expected, 3.0 * std::sqrt(expected * (1 - expected) / 20000.0) + 0.005);
  EXPECT_NEAR(est.to_level.estimate + est.to_surface.estimate, 1.0, 1e-12);
}

TEST(Simulator, ExitTimeMatchesOracle) {
  const double alpha = 1.0, beta = -0.5, rho = 1.0, eps = 4e-3, kappa = 0.02;
  const auto bc = constant_coefficients(alpha, beta, rho);
  const auto m = layer_cylinder(bc);
  const auto sol = solve_gamma(bc, 64);
  SimConfig c;
  c.eps = eps;
  const auto est = estimate_exit_time(m, c, 0, sol, kappa, 4000, RunOptions{18, 1});
  const double expected = oracle::layer_exit_time(alpha, beta, rho, kappa / eps);
  EXPECT_FALSE(est.unreliable);
  EXPECT_NEAR(est.time.mean / expected, 1.0, 3.0 * est.time.std_error / expected + 0.03);
  EXPECT_LE(est.q10, est.q50);
  EXPECT_LE(est.q50, est.q90);
  EXPECT_GE(est.second_moment, est.time.mean * est.time.mean);
}

TEST(Simulator, TimeBudgetIsReported) {
  const auto bc = constant_coefficients(1.0, -0.5, 1.0);
  const auto m = layer_cylinder(bc);
  const auto sol = solve_gamma(bc, 64);
  SimConfig c;
  c.eps = 1e-3;
  c.max_time = 0.05;
  const auto est = estimate_exit_time(m, c, 0, sol, 0.1, 50, RunOptions{19, 1});
  EXPECT_EQ(est.budget_exhausted, 50u);
  EXPECT_TRUE(est.unreliable);
}

TEST(Simulator, ChartThresholdInsensitive) {
  const double alpha = 1.0, beta = 0.5, rho = 0.5, eps = 1e-2, kappa = 0.1, zeta = kappa / 4.0;
  const auto bc = constant_coefficients(alpha, beta, rho);
  const auto m = layer_cylinder(bc);
  const auto sol = solve_gamma(bc, 64);
  SimConfig lo, hi;
  lo.eps = hi.eps = eps;
  lo.c_micro = 5.0;
  hi.c_micro = 12.0;
  lo.log_upper_fraction = 0.45;
  hi.log_upper_fraction = 0.55;
  const auto a = estimate_exit_prob(m, lo, 0, sol, zeta, kappa, 10000, RunOptions{20, 1});
  const auto b = estimate_exit_prob(m, hi, 0, sol, zeta, kappa, 10000, RunOptions{21, 1});
  const double se = std::sqrt(2.0 * 0.25 / 10000.0);
  EXPECT_NEAR(a.to_level.estimate, b.to_level.estimate, 3.0 * se);
}
