#include "degenflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "degenflow/error.hpp"

namespace degenflow {

namespace {

double grid_step(int n) { return kTwoPi / n; }

void check_grid(int n) {
  if (n < 16) throw Error(ErrorCode::InvalidArgument, "grid size must be at least 16");
}

double quadrature(const std::vector<double>& f, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * w[i];
  return s * grid_step(static_cast<int>(f.size()));
}

Eigen::MatrixXd to_dense(const CyclicTridiagonal& m) {
  const auto n = static_cast<Eigen::Index>(m.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) += m.diag[i];
    d(i, (i + n - 1) % n) += m.sub[i];
    d(i, (i + 1) % n) += m.sup[i];
  }
  return d;
}

CyclicTridiagonal assemble(const BoundaryCoefficients& bc, int n, double gamma) {
  check_grid(n);
  const double h = grid_step(n);
  CyclicTridiagonal m;
  m.sub.resize(n);
  m.diag.resize(n);
  m.sup.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto v = evaluate(bc, h * i);
    const double second = 0.5 * v.a / (h * h);
    const double first = (v.b + gamma * v.d_cross) / (2.0 * h);
    m.sub[i] = second - first;
    m.sup[i] = second + first;
    m.diag[i] = -2.0 * second + gamma * (v.alpha * (gamma - 1.0) + v.beta);
  }
  return m;
}

void normalize_against(std::vector<double>& phi, const std::vector<double>& pi) {
  const double mass = quadrature(phi, pi);
  for (auto& v : phi) v /= mass;
}

}  // namespace

CyclicTridiagonal CyclicTridiagonal::transposed() const {
  const std::size_t n = size();
  CyclicTridiagonal t;
  t.diag = diag;
  t.sub.resize(n);
  t.sup.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.sub[i] = sup[(i + n - 1) % n];
    t.sup[i] = sub[(i + 1) % n];
  }
  return t;
}

std::vector<double> CyclicTridiagonal::apply(const std::vector<double>& x) const {
  const std::size_t n = size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = sub[i] * x[(i + n - 1) % n] + diag[i] * x[i] + sup[i] * x[(i + 1) % n];
  }
  return y;
}

bool CyclicTridiagonal::metzler() const {
  const auto nonneg = [](double v) { return v >= 0.0; };
  return std::all_of(sub.begin(), sub.end(), nonneg) && std::all_of(sup.begin(), sup.end(), nonneg);
}

std::vector<double> CyclicTridiagonal::solve_shifted(double shift, std::vector<double> y) const {
  const std::size_t n = size();
  std::vector<double> d(n), cs(n, 0.0), f(n, 0.0), r(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    d[i] = shift - diag[i];
    cs[i] = -sup[i];
  }
  f[0] = -sub[0];
  f[n - 2] += cs[n - 2];
  cs[n - 2] = 0.0;
  r[0] = -sup[n - 1];
  r[n - 2] += -sub[n - 1];
  r[n - 1] = shift - diag[n - 1];

  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (i + 2 < n) {
      const double m = -sub[i + 1] / d[i];
      d[i + 1] -= m * cs[i];
      f[i + 1] -= m * f[i];
      y[i + 1] -= m * y[i];
    }
    const double mr = r[i] / d[i];
    if (i + 2 < n) r[i + 1] -= mr * cs[i];
    r[n - 1] -= mr * f[i];
    y[n - 1] -= mr * y[i];
  }
  std::vector<double> x(n);
  x[n - 1] = y[n - 1] / r[n - 1];
  x[n - 2] = (y[n - 2] - f[n - 2] * x[n - 1]) / d[n - 2];
  for (std::size_t k = n - 2; k-- > 0;) x[k] = (y[k] - cs[k] * x[k + 1] - f[k] * x[n - 1]) / d[k];
  return x;
}

CyclicTridiagonal discretize_pencil(const BoundaryCoefficients& bc, double gamma, int n) {
  return assemble(bc, n, gamma);
}

CyclicTridiagonal discretize_circle_generator(const BoundaryCoefficients& bc, int n) {
  return assemble(bc, n, 0.0);
}

Eigenpair principal_eigenpair(const CyclicTridiagonal& m, double tol) {
  const std::size_t n = m.size();
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(m.diag[i]));
  if (tol <= 0.0) tol = 256.0 * std::numeric_limits<double>::epsilon() * scale;

  std::vector<double> v(n, 1.0);
  for (int iter = 0; iter < 500; ++iter) {
    const auto w = m.apply(v);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = w[i] / v[i];
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    if (hi - lo <= tol) {
      const double vmax = *std::max_element(v.begin(), v.end());
      for (auto& x : v) x /= vmax;
      return {0.5 * (lo + hi), std::move(v)};
    }
    const double shift = hi + 1e-3 * (hi - lo) + 4.0 * std::numeric_limits<double>::epsilon() * scale;
    auto x = m.solve_shifted(shift, v);
    double xmax = 0.0;
    for (double xi : x) {
      if (!(xi > 0.0) || !std::isfinite(xi)) {
        throw Error(ErrorCode::EigensolveFailure, "inverse iteration lost positivity");
      }
      xmax = std::max(xmax, xi);
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = x[i] / xmax;
  }
  throw Error(ErrorCode::EigensolveFailure, "inverse iteration did not converge");
}

Eigenpair top_eigenvalue(const BoundaryCoefficients& bc, double gamma, int n) {
  const auto m = discretize_pencil(bc, gamma, n);
  if (!m.metzler()) return top_eigenvalue_dense(bc, gamma, n);
  auto pair = principal_eigenpair(m);
  normalize_against(pair.vector, invariant_measure(bc, n));
  return pair;
}

Eigenpair top_eigenvalue_dense(const BoundaryCoefficients& bc, double gamma, int n) {
  const auto m = discretize_pencil(bc, gamma, n);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(to_dense(m));
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::EigensolveFailure, "dense eigensolve failed");
  const auto& values = solver.eigenvalues();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values[i].real() > values[best].real()) best = i;
  }
  Eigen::VectorXd vec = solver.eigenvectors().col(best).real();
  if (vec.sum() < 0.0) vec = -vec;
  std::vector<double> phi(vec.data(), vec.data() + vec.size());
  const double vmax = *std::max_element(phi.begin(), phi.end());
  for (auto& x : phi) {
    x /= vmax;
    if (!(x > 0.0)) throw Error(ErrorCode::NonPositiveEigenfunction, "principal eigenvector changes sign; refine the grid");
  }
  normalize_against(phi, invariant_measure(bc, n));
  return {values[best].real(), std::move(phi)};
}

std::vector<double> invariant_measure(const BoundaryCoefficients& bc, int n) {
  const auto gen = discretize_circle_generator(bc, n);
  std::vector<double> pi;
  if (gen.metzler()) {
    pi = principal_eigenpair(gen.transposed()).vector;
  } else {
    Eigen::MatrixXd at = to_dense(gen).transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(at);
    Eigen::MatrixXd kernel = lu.kernel();
    if (kernel.cols() != 1) throw Error(ErrorCode::EigensolveFailure, "circle generator kernel is not one-dimensional");
    Eigen::VectorXd k = kernel.col(0);
    if (k.sum() < 0.0) k = -k;
    pi.assign(k.data(), k.data() + k.size());
    for (double x : pi) {
      if (!(x > 0.0)) throw Error(ErrorCode::EigensolveFailure, "invariant density is not positive");
    }
  }
  const double mass = std::accumulate(pi.begin(), pi.end(), 0.0) * grid_step(n);
  for (auto& x : pi) x /= mass;
  return pi;
}

std::pair<double, double> circle_averages(const BoundaryCoefficients& bc, const std::vector<double>& pi) {
  const int n = static_cast<int>(pi.size());
  const double h = grid_step(n);
  double abar = 0.0, bbar = 0.0;
  for (int i = 0; i < n; ++i) {
    abar += bc.alpha(h * i) * pi[i];
    bbar += bc.beta(h * i) * pi[i];
  }
  return {abar * h, bbar * h};
}

std::vector<double> solve_circle_poisson(const BoundaryCoefficients& bc, const std::vector<double>& pi,
                                         std::vector<double> rhs) {
  const int n = static_cast<int>(pi.size());
  const double h = grid_step(n);
  const double mean = quadrature(rhs, pi);
  if (std::abs(mean) > 1e-9) throw Error(ErrorCode::SingularSystem, "right side has nonzero pi-mean");
  for (auto& r : rhs) r -= mean;

  Eigen::MatrixXd a = to_dense(discretize_circle_generator(bc, n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) -= pi[j] * h;
  }
  const Eigen::Map<const Eigen::VectorXd> b(rhs.data(), n);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::VectorXd x = lu.solve(b);
  const double res = (a * x - b).lpNorm<Eigen::Infinity>();
  if (!std::isfinite(res) || res > 1e-8 * std::max(1.0, b.lpNorm<Eigen::Infinity>())) {
    throw Error(ErrorCode::SingularSystem, "circle Poisson solve did not converge");
  }
  return std::vector<double>(x.data(), x.data() + n);
}

std::vector<double> solve_psi(const BoundaryCoefficients& bc, int n) {
  const auto pi = invariant_measure(bc, n);
  const auto [abar, bbar] = circle_averages(bc, pi);
  const double h = grid_step(n);
  std::vector<double> rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = bc.alpha(h * i) - bc.beta(h * i) - (abar - bbar);
  return solve_circle_poisson(bc, pi, std::move(rhs));
}

double lambda_slope_at_zero(const BoundaryCoefficients& bc, int n, double step) {
  const auto up = principal_eigenpair(discretize_pencil(bc, step, n)).lambda;
  const auto down = principal_eigenpair(discretize_pencil(bc, -step, n)).lambda;
  return (up - down) / (2.0 * step);
}

std::vector<std::pair<double, double>> lambda_curve(const BoundaryCoefficients& bc, int n,
                                                    const std::vector<double>& gammas) {
  std::vector<std::pair<double, double>> out;
  out.reserve(gammas.size());
  for (double g : gammas) out.emplace_back(g, top_eigenvalue(bc, g, n).lambda);
  return out;
}

SpectralSolution solve_gamma(const BoundaryCoefficients& bc, int n, double tol) {
  check_grid(n);
  SpectralSolution sol;
  sol.n = n;
  sol.pi = invariant_measure(bc, n);
  std::tie(sol.alpha_bar, sol.beta_bar) = circle_averages(bc, sol.pi);
  const double gap = sol.alpha_bar - sol.beta_bar;
  if (std::abs(gap) <= 1e-9) {
    throw Error(ErrorCode::DegenerateClassification, "alpha_bar equals beta_bar; the boundary is neither attracting nor repelling");
  }

  const auto lam = [&](double g) {
    const auto m = discretize_pencil(bc, g, n);
    const double l = m.metzler() ? principal_eigenpair(m).lambda : top_eigenvalue_dense(bc, g, n).lambda;
    sol.lambda_curve.emplace_back(g, l);
    return l;
  };

  // lambda is convex with lambda(0) = 0 and slope beta_bar - alpha_bar, so it is
  // negative strictly between 0 and the root and positive beyond.
  double guess = 1.0 - sol.beta_bar / sol.alpha_bar;
  if (guess * gap <= 0.0) guess = gap;
  double inner = 0.0, outer = 0.0, f_inner = 0.0, f_outer = 0.0;
  double f = lam(guess);
  if (std::abs(f) <= tol) {
    inner = outer = guess;
  } else if (f < 0.0) {
    inner = guess;
    f_inner = f;
    outer = guess;
    for (int i = 0;; ++i) {
      if (i == 60) throw Error(ErrorCode::BracketFailure, "no sign change found while expanding");
      outer *= 2.0;
      f_outer = lam(outer);
      if (f_outer > 0.0) break;
      inner = outer;
      f_inner = f_outer;
    }
  } else {
    outer = guess;
    f_outer = f;
    inner = guess;
    for (int i = 0;; ++i) {
      if (i == 60) throw Error(ErrorCode::BracketFailure, "no sign change found while shrinking");
      inner *= 0.5;
      f_inner = lam(inner);
      if (f_inner < 0.0) break;
      outer = inner;
      f_outer = f_inner;
    }
  }

  double root = inner;
  if (inner != outer) {
    // Illinois variant of regula falsi, with bisection as a guard.
    int side = 0;
    root = 0.5 * (inner + outer);
    for (int iter = 0; iter < 200; ++iter) {
      double x = (inner * f_outer - outer * f_inner) / (f_outer - f_inner);
      if (!(std::min(inner, outer) < x && x < std::max(inner, outer))) x = 0.5 * (inner + outer);
      const double fx = lam(x);
      root = x;
      if (std::abs(fx) <= tol || std::abs(outer - inner) <= 1e-15 * std::abs(x)) break;
      if (fx < 0.0) {
        inner = x;
        f_inner = fx;
        if (side == -1) f_outer *= 0.5;
        side = -1;
      } else {
        outer = x;
        f_outer = fx;
        if (side == 1) f_inner *= 0.5;
        side = 1;
      }
      if (iter == 199) throw Error(ErrorCode::BracketFailure, "root refinement did not converge");
    }
  }

  sol.gamma = root;
  auto pair = top_eigenvalue(bc, root, n);
  sol.lambda = pair.lambda;
  sol.phi = std::move(pair.vector);
  const auto residual = discretize_pencil(bc, root, n).apply(sol.phi);
  sol.residual = 0.0;
  for (double r : residual) sol.residual = std::max(sol.residual, std::abs(r));
  sol.psi = solve_psi(bc, n);
  std::sort(sol.lambda_curve.begin(), sol.lambda_curve.end());
  return sol;
}

Classification classify(const BoundaryCoefficients& bc, int n) {
  const auto sol = solve_gamma(bc, n);
  return {sol.gamma > 0.0 ? Stability::Attracting : Stability::Repelling, sol.alpha_bar, sol.beta_bar, sol.gamma};
}

LevelSet gamma_level_set(const Model& model, int k, double kappa, const SpectralSolution& sol, Cell cell) {
  if (!(kappa > 0.0)) throw Error(ErrorCode::LevelOutOfChart, "kappa must be strictly positive");
  LevelSet level(k, kappa, sol.gamma, sol.phi, cell);
  if (level.max_z() >= model.delta()) {
    throw Error(ErrorCode::LevelOutOfChart, "level curve leaves the tubular chart");
  }
  return level;
}

}  // namespace degenflow
