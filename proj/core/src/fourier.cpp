#include "degenflow/fourier.hpp"

#include <algorithm>
#include <cmath>

namespace degenflow {

FourierSeries::FourierSeries(std::vector<double> cos_coeffs, std::vector<double> sin_coeffs)
    : cos_(std::move(cos_coeffs)), sin_(std::move(sin_coeffs)) {
  if (cos_.empty()) cos_.push_back(0.0);
  const auto nonzero = [](double v) { return v != 0.0; };
  constant_ = std::none_of(cos_.begin() + 1, cos_.end(), nonzero) &&
              std::none_of(sin_.begin(), sin_.end(), nonzero);
}

double FourierSeries::evaluate(double theta) const {
  const double c1 = std::cos(theta);
  const double s1 = std::sin(theta);
  double ck = 1.0, sk = 0.0;
  double value = cos_[0];
  const std::size_t order = std::max(cos_.size() - 1, sin_.size());
  for (std::size_t j = 1; j <= order; ++j) {
    const double cn = ck * c1 - sk * s1;
    sk = sk * c1 + ck * s1;
    ck = cn;
    if (j < cos_.size()) value += cos_[j] * ck;
    if (j <= sin_.size()) value += sin_[j - 1] * sk;
  }
  return value;
}

double FourierSeries::evaluate_derivative(double theta) const {
  const double c1 = std::cos(theta);
  const double s1 = std::sin(theta);
  double ck = 1.0, sk = 0.0;
  double value = 0.0;
  const std::size_t order = std::max(cos_.size() - 1, sin_.size());
  for (std::size_t j = 1; j <= order; ++j) {
    const double cn = ck * c1 - sk * s1;
    sk = sk * c1 + ck * s1;
    ck = cn;
    const double jd = static_cast<double>(j);
    if (j < cos_.size()) value -= jd * cos_[j] * sk;
    if (j <= sin_.size()) value += jd * sin_[j - 1] * ck;
  }
  return value;
}

FourierSeries FourierSeries::scaled(double factor) const {
  auto c = cos_;
  auto s = sin_;
  for (auto& v : c) v *= factor;
  for (auto& v : s) v *= factor;
  return FourierSeries(std::move(c), std::move(s));
}

}  // namespace degenflow
