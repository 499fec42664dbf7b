#include "degenflow/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "degenflow/error.hpp"

namespace degenflow {

Proportion wilson_interval(std::uint64_t successes, std::uint64_t trials, double z) {
  Proportion p;
  p.successes = successes;
  p.trials = trials;
  if (trials == 0) {
    p.lo = 0.0;
    p.hi = 1.0;
    return p;
  }
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double center = (phat + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
  p.estimate = phat;
  p.lo = std::max(0.0, center - half);
  p.hi = std::min(1.0, center + half);
  return p;
}

ScalingFit fit_scaling_exponent(const std::vector<std::pair<double, double>>& pairs, const std::vector<double>& weights) {
  std::set<double> distinct;
  for (const auto& [e, s] : pairs) {
    if (!(e > 0.0) || !(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps and statistic must be positive");
    distinct.insert(e);
  }
  if (distinct.size() < 3) throw Error(ErrorCode::InsufficientPoints, "need at least 3 distinct eps values");
  if (!weights.empty() && weights.size() != pairs.size()) {
    throw Error(ErrorCode::InvalidArgument, "weights must match the number of pairs");
  }
  const std::size_t n = pairs.size();
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    sw += w;
    sx += w * std::log(pairs[i].first);
    sy += w * std::log(pairs[i].second);
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double dx = std::log(pairs[i].first) - mx;
    sxx += w * dx * dx;
    sxy += w * dx * (std::log(pairs[i].second) - my);
  }
  ScalingFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double r = std::log(pairs[i].second) - fit.intercept - fit.slope * std::log(pairs[i].first);
    rss += w * r * r;
  }
  fit.stderr_slope = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
  return fit;
}

SampleSummary summarize(const std::vector<double>& x) {
  SampleSummary s;
  s.n = x.size();
  if (x.empty()) return s;
  s.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.variance = x.size() > 1 ? ss / static_cast<double>(x.size() - 1) : 0.0;
  s.std_error = std::sqrt(s.variance / static_cast<double>(x.size()));
  return s;
}

double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(x.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= x.size()) return x.back();
  return x[i] + (pos - static_cast<double>(i)) * (x[i + 1] - x[i]);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double anderson_darling(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw Error(ErrorCode::InvalidArgument, "Anderson-Darling needs a nonempty sample");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = std::clamp(cdf(x[i]), 1e-300, 1.0 - 1e-16);
    const double hi = std::clamp(cdf(x[n - 1 - i]), 1e-300, 1.0 - 1e-16);
    s += static_cast<double>(2 * i + 1) * (std::log(lo) + std::log1p(-hi));
  }
  return -static_cast<double>(n) - s / static_cast<double>(n);
}

}  // namespace degenflow
