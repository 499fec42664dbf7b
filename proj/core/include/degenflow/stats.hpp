#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace degenflow {

struct Proportion {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
};

/// Wilson score interval.
Proportion wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = 1.959963984540054);

struct ScalingFit {
  double slope = 0.0;
  double stderr_slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares fit of log(statistic) = intercept + slope * log(eps). Optional
/// weights multiply the squared residuals. Throws InsufficientPoints.
ScalingFit fit_scaling_exponent(const std::vector<std::pair<double, double>>& pairs,
                                const std::vector<double>& weights = {});

struct SampleSummary {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double std_error = 0.0;
  std::size_t n = 0;
};

SampleSummary summarize(const std::vector<double>& x);
/// Linear-interpolated quantile of the sorted copy.
double quantile(std::vector<double> x, double q);

double normal_cdf(double x);

/// Anderson-Darling statistic A^2 of a sample against a fully specified
/// continuous distribution function.
double anderson_darling(std::vector<double> x, const std::function<double(double)>& cdf);
/// Critical value of A^2 at the 1% level for a fully specified null.
inline constexpr double kAndersonDarling1Percent = 3.857;

}  // namespace degenflow
