#include "degenflow/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "degenflow/error.hpp"

namespace degenflow {

std::size_t BinLayout::boundary_bin(int k, double theta) const {
  auto j = static_cast<int>(wrap_angle(theta) / kTwoPi * angular);
  j = std::clamp(j, 0, angular - 1);
  return static_cast<std::size_t>(k) * angular + j;
}

std::size_t BinLayout::interior_bin(Vec2 p) const {
  double fx = (p.x - lo.x) / (hi.x - lo.x);
  double fy = (p.y - lo.y) / (hi.y - lo.y);
  // Periodic directions may carry unwrapped coordinates.
  if (fx < 0.0 || fx > 1.0) fx -= std::floor(fx);
  if (fy < 0.0 || fy > 1.0) fy -= std::floor(fy);
  const int i = std::clamp(static_cast<int>(fx * nx), 0, nx - 1);
  const int j = std::clamp(static_cast<int>(fy * ny), 0, ny - 1);
  return interior_offset() + static_cast<std::size_t>(j) * nx + i;
}

BinnedMeasure BinnedMeasure::from_weights(BinLayout layout, std::vector<double> weights, std::uint64_t samples) {
  if (weights.size() != layout.size()) throw Error(ErrorCode::BinMismatch, "weights do not match the layout");
  BinnedMeasure m(layout);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (total > 0.0) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "negative bin weight");
      m.mass_[i] = weights[i] / total;
    }
  }
  m.samples_ = samples;
  return m;
}

double BinnedMeasure::boundary_mass(int k) const {
  const auto start = mass_.begin() + static_cast<std::ptrdiff_t>(k) * layout_.angular;
  return std::accumulate(start, start + layout_.angular, 0.0);
}

double BinnedMeasure::interior_mass() const {
  return std::accumulate(mass_.begin() + static_cast<std::ptrdiff_t>(layout_.interior_offset()), mass_.end(), 0.0);
}

BinnedMeasure BinnedMeasure::angular(int k) const {
  const auto start = mass_.begin() + static_cast<std::ptrdiff_t>(k) * layout_.angular;
  std::vector<double> w(start, start + layout_.angular);
  if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) std::fill(w.begin(), w.end(), 1.0);
  return from_weights(BinLayout::circle(layout_.angular), std::move(w), samples_);
}

BinnedMeasure BinnedMeasure::interior() const {
  std::vector<double> w(mass_.begin() + static_cast<std::ptrdiff_t>(layout_.interior_offset()), mass_.end());
  return from_weights(BinLayout::interior(layout_.lo, layout_.hi, layout_.nx, layout_.ny), std::move(w), samples_);
}

std::vector<double> BinnedMeasure::bin_std_errors() const {
  std::vector<double> se(mass_.size(), 0.0);
  if (samples_ == 0) return se;
  for (std::size_t i = 0; i < mass_.size(); ++i) {
    se[i] = std::sqrt(mass_[i] * (1.0 - mass_[i]) / static_cast<double>(samples_));
  }
  return se;
}

void MeasureAccumulator::merge(const MeasureAccumulator& other) {
  if (!(other.layout_ == layout_)) throw Error(ErrorCode::BinMismatch, "cannot merge different layouts");
  for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] += other.weights_[i];
  count_ += other.count_;
}

BinnedMeasure MeasureAccumulator::finish() const { return BinnedMeasure::from_weights(layout_, weights_, count_); }

MeasureDistance measure_distance(const BinnedMeasure& p, const BinnedMeasure& q) {
  if (!(p.layout() == q.layout())) throw Error(ErrorCode::BinMismatch, "measures use different bin layouts");
  MeasureDistance d;
  const auto& a = p.mass();
  const auto& b = q.mass();
  for (std::size_t i = 0; i < a.size(); ++i) d.tv += std::abs(a[i] - b[i]);
  d.tv *= 0.5;
  const auto& l = p.layout();
  if (l.circles == 1 && l.nx * l.ny == 0) {
    const int n = l.angular;
    std::vector<double> f(n);
    double run = 0.0;
    for (int i = 0; i < n; ++i) {
      run += a[i] - b[i];
      f[i] = run;
    }
    std::vector<double> sorted = f;
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    double med = sorted[n / 2];
    if (n % 2 == 0) {
      const double lower = *std::max_element(sorted.begin(), sorted.begin() + n / 2);
      med = 0.5 * (med + lower);
    }
    double w = 0.0;
    for (double v : f) w += std::abs(v - med);
    d.w1 = w * kTwoPi / n;
  }
  return d;
}

BinnedMeasure uniform_circle(int bins) {
  return BinnedMeasure::from_weights(BinLayout::circle(bins), std::vector<double>(bins, 1.0), 0);
}

BinnedMeasure circle_from_density(const std::vector<double>& density, int bins) {
  // Integrate the piecewise-linear interpolant of the grid density over each arc.
  const int n = static_cast<int>(density.size());
  const int sub = 64;
  std::vector<double> w(bins, 0.0);
  for (int j = 0; j < bins; ++j) {
    for (int s = 0; s < sub; ++s) {
      const double t = (j + (s + 0.5) / sub) / bins * n;
      const int i = static_cast<int>(std::floor(t)) % n;
      const double fr = t - std::floor(t);
      w[j] += (1.0 - fr) * density[i] + fr * density[(i + 1) % n];
    }
  }
  return BinnedMeasure::from_weights(BinLayout::circle(bins), std::move(w), 0);
}

BinnedMeasure mixture(const BinLayout& layout, const std::vector<std::pair<double, BinnedMeasure>>& circle_parts,
                      double interior_weight, const BinnedMeasure* interior) {
  std::vector<double> w(layout.size(), 0.0);
  if (static_cast<int>(circle_parts.size()) > layout.circles) {
    throw Error(ErrorCode::BinMismatch, "more circle components than layout circles");
  }
  for (std::size_t k = 0; k < circle_parts.size(); ++k) {
    const auto& [weight, m] = circle_parts[k];
    if (weight == 0.0) continue;
    if (m.layout().angular != layout.angular || m.mass().size() != static_cast<std::size_t>(layout.angular)) {
      throw Error(ErrorCode::BinMismatch, "circle component does not match the angular resolution");
    }
    for (int j = 0; j < layout.angular; ++j) w[k * layout.angular + j] += weight * m.mass()[j];
  }
  if (interior_weight > 0.0) {
    if (interior == nullptr || interior->mass().size() != static_cast<std::size_t>(layout.nx) * layout.ny) {
      throw Error(ErrorCode::BinMismatch, "interior component does not match the layout");
    }
    for (std::size_t i = 0; i < interior->mass().size(); ++i) {
      w[layout.interior_offset() + i] += interior_weight * interior->mass()[i];
    }
  }
  return BinnedMeasure::from_weights(layout, std::move(w), 0);
}

}  // namespace degenflow
