#pragma once

#include <random>

#include "degenflow/geometry.hpp"

namespace degenflow::testing {

inline FourierSeries random_series(std::mt19937_64& rng, double mean, double amplitude, int order = 2) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> c{mean}, s;
  // Keep the total amplitude below `amplitude` so positivity is guaranteed.
  const double per = amplitude / (2.0 * order);
  for (int j = 0; j < order; ++j) {
    c.push_back(per * u(rng));
    s.push_back(per * u(rng));
  }
  return FourierSeries(c, s);
}

inline BoundaryCoefficients random_coefficients(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BoundaryCoefficients bc;
  bc.a = random_series(rng, 1.0, 0.5);
  bc.b = random_series(rng, 0.3 * u(rng), 0.5);
  bc.alpha = random_series(rng, 1.0, 0.5);
  bc.beta = random_series(rng, 0.5 + 0.3 * u(rng), 0.4);
  bc.d_cross = random_series(rng, 0.1 * u(rng), 0.2);
  return bc;
}

inline BoundaryCoefficients constant_coefficients(double alpha, double beta, double rho = 0.5) {
  BoundaryCoefficients bc;
  bc.alpha = FourierSeries(alpha);
  bc.beta = FourierSeries(beta);
  bc.rho = FourierSeries(rho);
  return bc;
}

}  // namespace degenflow::testing
