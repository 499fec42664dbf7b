#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "degenflow/error.hpp"
#include "degenflow/measure.hpp"

using namespace degenflow;

namespace {

double total(const BinnedMeasure& m) { return std::accumulate(m.mass().begin(), m.mass().end(), 0.0); }

BinnedMeasure point_mass(int bin, int bins = 32) {
  std::vector<double> w(bins, 0.0);
  w[bin] = 1.0;
  return BinnedMeasure::from_weights(BinLayout::circle(bins), w, 1);
}

}  // namespace

TEST(MeasureDistance, IdenticalMeasures) {
  const auto u = uniform_circle();
  const auto d = measure_distance(u, u);
  EXPECT_EQ(d.tv, 0.0);
  ASSERT_TRUE(d.w1.has_value());
  EXPECT_EQ(*d.w1, 0.0);
}

TEST(MeasureDistance, AntipodalPointMasses) {
  const auto d = measure_distance(point_mass(0), point_mass(16));
  EXPECT_DOUBLE_EQ(d.tv, 1.0);
  EXPECT_NEAR(*d.w1, M_PI, 1e-12);
}

TEST(MeasureDistance, ShiftedBin) {
  std::vector<double> w(32, 1.0 / 32.0);
  w[3] += 0.1;
  for (int j : {10, 15, 20, 25}) w[j] -= 0.1 / 4.0;
  const auto p = BinnedMeasure::from_weights(BinLayout::circle(), w, 1);
  EXPECT_NEAR(measure_distance(uniform_circle(), p).tv, 0.1, 1e-12);
}

TEST(MeasureDistance, NeighbourPointMasses) {
  const auto d = measure_distance(point_mass(0), point_mass(1));
  EXPECT_NEAR(*d.w1, kTwoPi / 32.0, 1e-12);
  EXPECT_NEAR(*measure_distance(point_mass(0), point_mass(31)).w1, kTwoPi / 32.0, 1e-12);
}

TEST(MeasureDistance, LayoutMismatch) {
  try {
    measure_distance(uniform_circle(32), uniform_circle(16));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BinMismatch);
  }
}

TEST(Binning, Conservation) {
  BinLayout lay{2, 32, 8, 8, {0.0, 0.0}, {kTwoPi, 1.0}};
  MeasureAccumulator acc(lay);
  acc.add_boundary(0, 0.1);
  acc.add_boundary(1, 6.0, 2.0);
  acc.add_interior({3.0, 0.5}, 0.5);
  const auto m = acc.finish();
  EXPECT_NEAR(total(m), 1.0, 1e-12);
  EXPECT_NEAR(m.boundary_mass(0) + m.boundary_mass(1) + m.interior_mass(), 1.0, 1e-12);
  EXPECT_NEAR(m.boundary_mass(1), 2.0 / 3.5, 1e-12);
  EXPECT_NEAR(total(m.angular(1)), 1.0, 1e-12);
  EXPECT_NEAR(total(m.interior()), 1.0, 1e-12);
  EXPECT_EQ(m.samples(), 3u);
}

TEST(Binning, CircleFromDensity) {
  std::vector<double> dens(256);
  for (std::size_t i = 0; i < dens.size(); ++i) dens[i] = 1.0 + 0.5 * std::cos(kTwoPi * i / 256.0);
  const auto m = circle_from_density(dens);
  EXPECT_NEAR(total(m), 1.0, 1e-12);
  // Bin 0 covers [0, 2 pi / 32): integral of (1 + 0.5 cos) / (2 pi).
  const double h = kTwoPi / 32.0;
  EXPECT_NEAR(m.mass()[0], (h + 0.5 * std::sin(h)) / kTwoPi, 1e-4);
  EXPECT_NEAR(measure_distance(circle_from_density(std::vector<double>(64, 2.0)), uniform_circle()).tv, 0.0, 1e-12);
}

TEST(Binning, MixtureWeights) {
  const BinLayout lay{2, 32, 4, 4, {0.0, 0.0}, {1.0, 1.0}};
  const auto mix = mixture(lay, {{0.25, uniform_circle()}, {0.75, point_mass(5)}});
  EXPECT_NEAR(mix.boundary_mass(0), 0.25, 1e-15);
  EXPECT_NEAR(mix.mass()[lay.boundary_bin(1, 5.5 * kTwoPi / 32.0)], 0.75, 1e-15);
  EXPECT_NEAR(total(mix), 1.0, 1e-12);
}
