#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "degenflow/error.hpp"
#include "degenflow/homogenization.hpp"

namespace degenflow {
namespace {

RenewalWalkModel single_type(std::vector<KernelEntry> row, double c) {
  RenewalWalkModel w;
  w.rows = {std::move(row)};
  w.c = {c};
  return w;
}

RenewalWalkModel nearest_neighbor() {
  return single_type({{{1, 0}, 0, 0.25}, {{-1, 0}, 0, 0.25}, {{0, 1}, 0, 0.25}, {{0, -1}, 0, 0.25}}, 1.0);
}

// Two types with type-dependent steps and times.
RenewalWalkModel two_type() {
  RenewalWalkModel w;
  w.rows = {{{{1, 0}, 1, 0.5}, {{0, 0}, 0, 0.2}, {{0, 1}, 0, 0.3}},
            {{{-1, 0}, 0, 0.4}, {{1, 1}, 1, 0.35}, {{0, -1}, 1, 0.25}}};
  w.c = {1.5, 0.7};
  return w;
}

RenewalWalkModel random_walk_model(std::mt19937_64& gen, int types) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::uniform_int_distribution<int> off(-2, 2);
  RenewalWalkModel w;
  w.rows.resize(types);
  for (int k = 0; k < types; ++k) {
    double sum = 0.0;
    for (int e = 0; e < 6; ++e) {
      const double p = u(gen);
      w.rows[k].push_back({{off(gen), off(gen)}, e % types, p});
      sum += p;
    }
    for (auto& e : w.rows[k]) e.prob /= sum;
    w.c.push_back(u(gen) + 0.5);
  }
  return w;
}

void expect_near(Mat2 a, Mat2 b, double tol) {
  EXPECT_NEAR(a.xx, b.xx, tol);
  EXPECT_NEAR(a.xy, b.xy, tol);
  EXPECT_NEAR(a.yy, b.yy, tol);
}

TEST(RenewalWalk, DriftHandExample) {
  const auto w = single_type({{{1, 0}, 0, 0.6}, {{-1, 0}, 0, 0.4}}, 2.0);
  const Vec2 a = effective_drift(w);
  EXPECT_NEAR(a.x, 0.1, 1e-15);
  EXPECT_NEAR(a.y, 0.0, 1e-15);
}

TEST(RenewalWalk, NearestNeighborGivesHalfIdentity) {
  const auto eff = effective_diffusion(nearest_neighbor());
  EXPECT_NEAR(eff.a.x, 0.0, 1e-15);
  EXPECT_NEAR(eff.a.y, 0.0, 1e-15);
  expect_near(eff.B, {0.5, 0.0, 0.5}, 1e-14);
  EXPECT_NEAR(eff.mean_time, 1.0, 1e-15);
}

TEST(RenewalWalk, IidRowsHaveNoPoissonCorrection) {
  // Both rows carry the same joint law of (shift, next type) and the same time.
  const std::vector<KernelEntry> row{{{1, 0}, 0, 0.3}, {{0, 2}, 1, 0.2}, {{-1, -1}, 1, 0.4}, {{2, 1}, 0, 0.1}};
  RenewalWalkModel w;
  w.rows = {row, row};
  w.c = {2.0, 2.0};
  const auto eff = effective_diffusion(w);
  // pi = (0.4, 0.6) from the column sums of the type matrix.
  EXPECT_NEAR(eff.pi(0), 0.4, 1e-14);
  const double mu = 2.0;
  Vec2 m{};
  for (const auto& e : row) m = m + e.prob * Vec2{double(e.shift.i), double(e.shift.j)};
  const Vec2 a = (1.0 / mu) * m;
  EXPECT_NEAR(eff.a.x, a.x, 1e-14);
  EXPECT_NEAR(eff.a.y, a.y, 1e-14);
  // Covariance of one step about a c.
  Mat2 S;
  for (int k = 0; k < 2; ++k) {
    const double pk = k == 0 ? 0.4 : 0.6;
    for (const auto& e : row) {
      const double gx = e.shift.i - a.x * w.c[k], gy = e.shift.j - a.y * w.c[k];
      S.xx += pk * e.prob * gx * gx;
      S.xy += pk * e.prob * gx * gy;
      S.yy += pk * e.prob * gy * gy;
    }
  }
  expect_near(eff.B, {S.xx / mu, S.xy / mu, S.yy / mu}, 1e-12);
}

TEST(RenewalWalk, TwoTypeMatchesLongSimulation) {
  const auto w = two_type();
  const auto eff = effective_diffusion(w);
  const auto sim = walk_batch_means(w, 10'000'000, 1000, 11);
  EXPECT_LE(std::abs(eff.a.x - sim.a.x), 3.0 * sim.a_stderr.x);
  EXPECT_LE(std::abs(eff.a.y - sim.a.y), 3.0 * sim.a_stderr.y);
  EXPECT_LE(std::abs(sim.B.xx / eff.B.xx - 1.0), 0.1);
  EXPECT_LE(std::abs(sim.B.yy / eff.B.yy - 1.0), 0.1);
  EXPECT_LE(std::abs(sim.B.xy - eff.B.xy), 0.1 * std::sqrt(eff.B.xx * eff.B.yy));
}

TEST(RenewalWalk, PoissonCorrectionMatters) {
  // Alternating types with anticorrelated steps: the i.i.d. formula overstates B.
  RenewalWalkModel w;
  w.rows = {{{{1, 0}, 1, 0.8}, {{1, 1}, 0, 0.1}, {{0, -1}, 0, 0.1}},
            {{{-1, 0}, 0, 0.8}, {{0, 1}, 1, 0.1}, {{-1, -1}, 1, 0.1}}};
  w.c = {1.0, 1.0};
  const auto eff = effective_diffusion(w);
  const auto sim = walk_batch_means(w, 10'000'000, 1000, 5);
  // Per-step second moment of the shift in x is 0.9.
  EXPECT_LT(eff.B.xx, 0.5);
  EXPECT_LE(std::abs(sim.B.xx / eff.B.xx - 1.0), 0.1);
  EXPECT_LE(std::abs(sim.B.yy / eff.B.yy - 1.0), 0.1);
}

TEST(RenewalWalk, PointGroupEquivariance) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = random_walk_model(gen, 1 + trial % 3);
    const auto e0 = effective_diffusion(w);
    const auto e1 = effective_diffusion(rotate_quarter(w));
    // R = [[0, -1], [1, 0]]
    EXPECT_NEAR(e1.a.x, -e0.a.y, 1e-12);
    EXPECT_NEAR(e1.a.y, e0.a.x, 1e-12);
    expect_near(e1.B, {e0.B.yy, -e0.B.xy, e0.B.xx}, 1e-12);
  }
}

TEST(RenewalWalk, SymmetricKernelHasZeroDrift) {
  const auto eff = effective_diffusion(nearest_neighbor());
  const auto rot = effective_diffusion(rotate_quarter(nearest_neighbor()));
  EXPECT_EQ(eff.a.x, rot.a.x);
  expect_near(eff.B, rot.B, 0.0);
}

TEST(RenewalWalk, LatticeTranslationInvariance) {
  // Transitions listed with absolute origin and destination cells; only the
  // differences enter the walk.
  struct Absolute {
    Cell from, to;
    int type;
    double prob;
  };
  std::mt19937_64 gen(3);
  const auto w = random_walk_model(gen, 2);
  for (const Cell origin : {Cell{0, 0}, Cell{5, -2}, Cell{-7, 11}}) {
    RenewalWalkModel r = w;
    for (int k = 0; k < w.types(); ++k) {
      for (std::size_t i = 0; i < w.rows[k].size(); ++i) {
        const auto& e = w.rows[k][i];
        const Absolute abs{origin, {origin.i + e.shift.i, origin.j + e.shift.j}, e.to, e.prob};
        r.rows[k][i].shift = {abs.to.i - abs.from.i, abs.to.j - abs.from.j};
      }
    }
    const auto e0 = effective_diffusion(w), e1 = effective_diffusion(r);
    EXPECT_EQ(e0.a.x, e1.a.x);
    EXPECT_EQ(e0.a.y, e1.a.y);
    expect_near(e0.B, e1.B, 0.0);
  }
}

TEST(RenewalWalk, Errors) {
  RenewalWalkModel split;
  split.rows = {{{{1, 0}, 0, 0.5}, {{-1, 0}, 0, 0.5}}, {{{0, 1}, 1, 0.5}, {{0, -1}, 1, 0.5}}};
  split.c = {1.0, 1.0};
  try {
    (void)effective_drift(split);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonErgodicTypeChain);
  }
  const auto line = single_type({{{1, 0}, 0, 0.5}, {{-1, 0}, 0, 0.5}}, 1.0);
  try {
    (void)effective_diffusion(line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PoissonSolveFailure);
  }
  auto bad = nearest_neighbor();
  bad.rows[0][0].prob = 0.3;
  EXPECT_THROW((void)effective_drift(bad), Error);
  bad = nearest_neighbor();
  bad.c = {0.0};
  EXPECT_THROW((void)effective_drift(bad), Error);
}

TEST(RenewalWalk, EndpointsAreNormal) {
  const auto w = two_type();
  const auto eff = effective_diffusion(w);
  RunOptions opt;
  opt.seed = 8;
  const auto t = endpoint_normality(w, eff, 400, 20'000, opt);
  EXPECT_TRUE(t.normal_x) << t.ad_x;
  EXPECT_TRUE(t.normal_y) << t.ad_y;
  EXPECT_NEAR(t.mean_drift.x, eff.a.x, 0.01);
}

TEST(RenewalWalk, EndpointsDeterministicAcrossThreads) {
  const auto w = two_type();
  const auto eff = effective_diffusion(w);
  RunOptions one{4, 1}, four{4, 4};
  const auto a = endpoint_normality(w, eff, 50, 1000, one);
  const auto b = endpoint_normality(w, eff, 50, 1000, four);
  for (std::size_t i = 0; i < a.standardized.size(); ++i) {
    EXPECT_EQ(a.standardized[i].x, b.standardized[i].x);
    EXPECT_EQ(a.standardized[i].y, b.standardized[i].y);
  }
}

// Plane with one hole per cell.
Model plane(double beta, double rho, double radius = 0.25) {
  BoundarySpec b;
  b.center = {0.5, 0.5};
  b.radius = radius;
  b.coefficients.beta = FourierSeries{beta};
  b.coefficients.rho = FourierSeries{rho};
  InteriorSpec in;
  in.delta = 0.1;
  return Model::build(GeometryKind::PeriodicPlane, {b}, in);
}

SimConfig plane_config(double eps) {
  SimConfig c;
  c.eps = eps;
  c.dt = 1e-3;
  c.c_micro = 2.0;
  c.dt_micro = 5.0;
  return c;
}

TEST(RenewalBuild, SymmetricDiskKernel) {
  const Model m = plane(0.5, 0.5);
  const auto sol = solve_gamma(m.coefficients(0), 64);
  RenewalBuildOptions bo;
  bo.eps = {1e-2};
  bo.n = 3000;
  RunOptions opt;
  opt.seed = 12;
  const auto w = build_renewal_model(m, plane_config(1e-2), {sol}, bo, opt);
  double sum = 0.0;
  for (const auto& e : w.rows[0]) sum += e.prob;
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_LE(w.tail[0], 1e-3);
  EXPECT_GT(w.c[0], 0.0);
  const double n = static_cast<double>(w.row_counts[0]);
  auto prob = [&](Cell c) {
    for (const auto& e : w.rows[0]) {
      if (e.shift == c) return e.prob;
    }
    return 0.0;
  };
  // Quarter turns of the lattice permute the kernel.
  for (const auto& e : w.rows[0]) {
    Cell c = e.shift;
    for (int r = 0; r < 3; ++r) {
      c = Cell{-c.j, c.i};
      const double q = prob(c);
      const double se = std::sqrt((e.prob * (1 - e.prob) + q * (1 - q)) / n);
      EXPECT_LE(std::abs(q - e.prob), 4.0 * std::max(se, 1.0 / n)) << e.shift.i << "," << e.shift.j;
    }
  }
  const auto eff = effective_diffusion(w);
  ASSERT_TRUE(eff.a_stderr.has_value());
  EXPECT_LE(std::hypot(eff.a.x, eff.a.y), 3.0 * std::hypot(eff.a_stderr->x, eff.a_stderr->y));
  EXPECT_NEAR(eff.B.xx / eff.B.yy, 1.0, 0.15);
}

TEST(RenewalBuild, TruncationTooSmall) {
  const Model m = plane(0.5, 0.5);
  const auto sol = solve_gamma(m.coefficients(0), 64);
  RenewalBuildOptions bo;
  bo.eps = {1e-2};
  bo.n = 400;
  bo.radius = 1;
  bo.max_tail = 0.0;
  try {
    (void)build_renewal_model(m, plane_config(1e-2), {sol}, bo, RunOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TruncationTooSmall);
  }
}

TEST(RenewalBuild, RenewalTimeScaling) {
  // gamma = 1; small rho keeps the finite-eps correction to the slope small.
  const Model m = plane(0.0, 0.05);
  const auto sol = solve_gamma(m.coefficients(0), 64);
  ASSERT_NEAR(sol.gamma, 1.0, 1e-9);
  RenewalBuildOptions bo;
  bo.eps = {1e-2, 5e-3, 2.5e-3};
  bo.n = 1500;
  RunOptions opt;
  opt.seed = 2;
  const auto w = build_renewal_model(m, plane_config(1e-2), {sol}, bo, opt);
  ASSERT_EQ(w.time_fits.size(), 1u);
  EXPECT_NEAR(w.time_fits[0].slope, -1.0, 0.1);
}

TEST(Slowdown, RequiresRepelling) {
  const Model m = plane(0.5, 0.5);
  const auto sol = solve_gamma(m.coefficients(0), 64);
  try {
    (void)slowdown_factors(m, plane_config(1e-2), {sol}, {0.0, 0.0}, {1.0}, 10, RunOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotAllRepelling);
  }
}

TEST(Slowdown, FreeRegionClassification) {
  const Model m = plane(2.0, 0.5);
  const SimConfig c = plane_config(1e-2);
  EXPECT_TRUE(in_free_region(m, state_at(m, {0.0, 0.0}, c)));
  EXPECT_FALSE(in_free_region(m, state_at(m, {0.5, 0.5}, c)));
  EXPECT_FALSE(in_free_region(m, state_at(m, {3.5, -1.5}, c)));
  EXPECT_FALSE(in_free_region(m, state_on_tube(m, 0, 1.0, -0.01, c, {2, 1})));
  EXPECT_TRUE(in_free_region(m, state_on_tube(m, 0, 1.0, 0.01, c, {2, 1})));
}

TEST(Slowdown, WindowsAndRenewalReward) {
  // gamma = -0.5: entering a hole takes time of order eps^-0.5 = 10.
  const Model m = plane(1.5, 0.5);
  const auto sol = solve_gamma(m.coefficients(0), 64);
  ASSERT_NEAR(sol.gamma, -0.5, 1e-9);
  RunOptions opt;
  opt.seed = 4;
  const auto est = slowdown_factors(m, plane_config(1e-2), {sol}, {0.0, 0.0}, {0.5, 300.0}, 60, opt);
  ASSERT_EQ(est.windows.size(), 2u);
  EXPECT_EQ(est.budget_exhausted, 0u);
  EXPECT_NEAR(est.windows[0].free_fraction.mean, 1.0, 0.05);
  EXPECT_TRUE(est.monotone);
  const auto& w1 = est.windows[1];
  EXPECT_LT(w1.free_fraction.mean, 0.98);
  ASSERT_TRUE(w1.renewal_fraction.has_value());
  EXPECT_NEAR(*w1.renewal_fraction / w1.free_fraction.mean, 1.0, 0.1);
}

TEST(Slowdown, SmallerHolesTrapLess) {
  RunOptions opt;
  opt.seed = 9;
  std::vector<double> c;
  for (double r : {0.3, 0.12}) {
    const Model m = plane(1.5, 0.5, r);
    const auto sol = solve_gamma(m.coefficients(0), 64);
    c.push_back(slowdown_factors(m, plane_config(1e-2), {sol}, {0.0, 0.0}, {300.0}, 40, opt)
                    .windows[0]
                    .free_fraction.mean);
  }
  EXPECT_GT(c[1], c[0]);
}

}  // namespace
}  // namespace degenflow
