#pragma once

#include <utility>
#include <vector>

#include "degenflow/geometry.hpp"

namespace degenflow {

/// Periodic tridiagonal matrix: row i has sub[i] at column i-1, diag[i], sup[i] at column i+1
/// (indices mod n).
struct CyclicTridiagonal {
  std::vector<double> sub, diag, sup;

  std::size_t size() const { return diag.size(); }
  CyclicTridiagonal transposed() const;
  std::vector<double> apply(const std::vector<double>& x) const;
  /// Solves (shift * I - A) x = rhs by elimination without pivoting; intended for
  /// nonsingular M-matrices.
  std::vector<double> solve_shifted(double shift, std::vector<double> rhs) const;
  bool metzler() const;
};

/// Central-difference discretization of M(gamma) on n uniform circle nodes.
CyclicTridiagonal discretize_pencil(const BoundaryCoefficients& bc, double gamma, int n);
/// Discretization of L_y = (a/2) d2 + b d.
CyclicTridiagonal discretize_circle_generator(const BoundaryCoefficients& bc, int n);

struct Eigenpair {
  double lambda = 0.0;
  std::vector<double> vector;
};

/// Principal eigenpair of a Metzler matrix by inverse iteration with
/// Collatz-Wielandt bounds. The vector is scaled to max 1.
Eigenpair principal_eigenpair(const CyclicTridiagonal& m, double tol = 0.0);

/// Principal eigenvalue and eigenfunction of the discretized M(gamma). The
/// eigenfunction is normalized by sum phi_i pi_i h = 1.
Eigenpair top_eigenvalue(const BoundaryCoefficients& bc, double gamma, int n = 256);
/// Same quantity from a dense eigensolve; used as a cross-check.
Eigenpair top_eigenvalue_dense(const BoundaryCoefficients& bc, double gamma, int n = 256);

/// Density of the invariant probability of L_y on the grid (sum pi_i h = 1).
std::vector<double> invariant_measure(const BoundaryCoefficients& bc, int n = 256);

/// Mean-zero (under pi) solution of L_y psi = rhs. Throws SingularSystem when rhs
/// has nonzero pi-mean beyond 1e-9.
std::vector<double> solve_circle_poisson(const BoundaryCoefficients& bc, const std::vector<double>& pi,
                                         std::vector<double> rhs);
/// psi with L_y psi = alpha - beta - (alpha_bar - beta_bar).
std::vector<double> solve_psi(const BoundaryCoefficients& bc, int n = 256);

struct SpectralSolution {
  int n = 0;
  double gamma = 0.0;
  double lambda = 0.0;
  std::vector<double> phi;
  std::vector<double> pi;
  std::vector<double> psi;
  std::vector<std::pair<double, double>> lambda_curve;
  double alpha_bar = 0.0;
  double beta_bar = 0.0;
  double residual = 0.0;

  double grid_angle(int i) const { return kTwoPi * i / n; }
};

SpectralSolution solve_gamma(const BoundaryCoefficients& bc, int n = 256, double tol = 1e-10);

enum class Stability { Attracting, Repelling };

struct Classification {
  Stability stability;
  double alpha_bar;
  double beta_bar;
  double gamma;
};

Classification classify(const BoundaryCoefficients& bc, int n = 256);

/// Pi-averages of alpha and beta.
std::pair<double, double> circle_averages(const BoundaryCoefficients& bc, const std::vector<double>& pi);

/// Central finite-difference slope of gamma -> lambda_gamma at 0.
double lambda_slope_at_zero(const BoundaryCoefficients& bc, int n = 256, double step = 1e-4);

std::vector<std::pair<double, double>> lambda_curve(const BoundaryCoefficients& bc, int n,
                                                    const std::vector<double>& gammas);

/// Level set Gamma_kappa around boundary k built from a spectral solution.
/// Throws LevelOutOfChart unless 0 < kappa and the curve stays below delta.
LevelSet gamma_level_set(const Model& model, int k, double kappa, const SpectralSolution& sol, Cell cell = {});

}  // namespace degenflow
