#pragma once

#include <vector>

namespace degenflow {

/// Truncated real Fourier series on the circle:
///   f(t) = c[0] + sum_{j>=1} c[j] cos(j t) + s[j-1] sin(j t).
class FourierSeries {
 public:
  FourierSeries() : cos_{0.0} {}
  explicit FourierSeries(double constant) : cos_{constant} {}
  FourierSeries(std::vector<double> cos_coeffs, std::vector<double> sin_coeffs = {});

  double operator()(double theta) const { return constant_ ? cos_[0] : evaluate(theta); }
  double derivative(double theta) const { return constant_ ? 0.0 : evaluate_derivative(theta); }

  bool is_constant() const { return constant_; }
  double mean() const { return cos_.empty() ? 0.0 : cos_[0]; }

  const std::vector<double>& cos_coeffs() const { return cos_; }
  const std::vector<double>& sin_coeffs() const { return sin_; }

  FourierSeries scaled(double factor) const;

 private:
  double evaluate(double theta) const;
  double evaluate_derivative(double theta) const;

  std::vector<double> cos_;
  std::vector<double> sin_;
  bool constant_ = true;
};

}  // namespace degenflow
