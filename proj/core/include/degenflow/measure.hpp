#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "degenflow/geometry.hpp"

namespace degenflow {

/// Bins: `circles` blocks of `angular` equal arcs, followed by an nx x ny grid
/// over the box [lo, hi].
struct BinLayout {
  int circles = 0;
  int angular = 32;
  int nx = 0;
  int ny = 0;
  Vec2 lo{};
  Vec2 hi{};

  static BinLayout circle(int bins = 32) { return {1, bins, 0, 0, {}, {}}; }
  static BinLayout interior(Vec2 lo, Vec2 hi, int nx = 32, int ny = 32) { return {0, 32, nx, ny, lo, hi}; }
  static BinLayout full(const Model& m, int angular = 32, int n = 32) {
    return {m.boundary_count(), angular, n, n, m.box_lo(), m.box_hi()};
  }

  std::size_t size() const { return static_cast<std::size_t>(circles) * angular + static_cast<std::size_t>(nx) * ny; }
  std::size_t boundary_bin(int k, double theta) const;
  std::size_t interior_bin(Vec2 p) const;
  std::size_t interior_offset() const { return static_cast<std::size_t>(circles) * angular; }

  friend bool operator==(const BinLayout& a, const BinLayout& b) {
    return a.circles == b.circles && a.angular == b.angular && a.nx == b.nx && a.ny == b.ny && a.lo.x == b.lo.x &&
           a.lo.y == b.lo.y && a.hi.x == b.hi.x && a.hi.y == b.hi.y;
  }
};

class BinnedMeasure {
 public:
  BinnedMeasure() = default;
  explicit BinnedMeasure(BinLayout layout) : layout_(layout), mass_(layout.size(), 0.0) {}
  /// Normalizes nonnegative weights; samples records how many draws produced them.
  static BinnedMeasure from_weights(BinLayout layout, std::vector<double> weights, std::uint64_t samples);

  const BinLayout& layout() const { return layout_; }
  const std::vector<double>& mass() const { return mass_; }
  std::uint64_t samples() const { return samples_; }

  double boundary_mass(int k) const;
  double interior_mass() const;
  /// Angular law on circle k, renormalized (uniform if the circle has no mass).
  BinnedMeasure angular(int k) const;
  /// Interior law, renormalized.
  BinnedMeasure interior() const;
  /// Standard error of each bin under multinomial sampling.
  std::vector<double> bin_std_errors() const;

 private:
  BinLayout layout_;
  std::vector<double> mass_;
  std::uint64_t samples_ = 0;
};

/// Accumulates weighted samples into bins.
class MeasureAccumulator {
 public:
  explicit MeasureAccumulator(BinLayout layout) : layout_(layout), weights_(layout.size(), 0.0) {}
  void add_boundary(int k, double theta, double w = 1.0) { weights_[layout_.boundary_bin(k, theta)] += w; ++count_; }
  void add_interior(Vec2 p, double w = 1.0) { weights_[layout_.interior_bin(p)] += w; ++count_; }
  void add_bin(std::size_t bin, double w = 1.0) { weights_[bin] += w; ++count_; }
  void merge(const MeasureAccumulator& other);
  BinnedMeasure finish() const;
  const std::vector<double>& weights() const { return weights_; }
  std::uint64_t count() const { return count_; }

 private:
  BinLayout layout_;
  std::vector<double> weights_;
  std::uint64_t count_ = 0;
};

struct MeasureDistance {
  double tv = 0.0;
  std::optional<double> w1;  // only for single-circle layouts
};

/// Throws BinMismatch for different layouts.
MeasureDistance measure_distance(const BinnedMeasure& p, const BinnedMeasure& q);

/// Uniform law on one circle.
BinnedMeasure uniform_circle(int bins = 32);
/// Circle measure from a density on a uniform grid (e.g. a SpectralSolution's pi).
BinnedMeasure circle_from_density(const std::vector<double>& density, int bins = 32);
/// Combined-layout measure from per-circle angular laws and an interior law.
BinnedMeasure mixture(const BinLayout& layout, const std::vector<std::pair<double, BinnedMeasure>>& circle_parts,
                      double interior_weight = 0.0, const BinnedMeasure* interior = nullptr);

}  // namespace degenflow
