#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "degenflow/fourier.hpp"

namespace degenflow {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Lattice cell index; always (0, 0) outside the periodic plane.
struct Cell {
  int i = 0;
  int j = 0;
  friend bool operator==(Cell, Cell) = default;
};

/// Symmetric 2x2 matrix.
struct Mat2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;
};

inline double wrap_angle(double theta) {
  theta = std::fmod(theta, kTwoPi);
  return theta < 0.0 ? theta + kTwoPi : theta;
}

enum class GeometryKind { Cylinder, TorusWithHoles, PeriodicPlane };

std::string to_string(GeometryKind kind);
GeometryKind geometry_kind_from_string(const std::string& name);

/// Circle-restricted coefficients of the generator near one boundary component.
/// Normal form in tube coordinates (theta, z):
///   L = (a/2) d2/dtheta2 + b d/dtheta + z^2 alpha d2/dz2 + z beta d/dz
///       + z d_cross d2/(dtheta dz) + R,
/// and the perturbation contributes rho d2/dz2 at z = 0.
struct BoundaryCoefficients {
  FourierSeries a{1.0};
  FourierSeries b{0.0};
  FourierSeries alpha{1.0};
  FourierSeries beta{0.5};
  FourierSeries d_cross{0.0};
  FourierSeries rho{0.5};
  double remainder_scale = 0.0;
};

struct CoefficientValues {
  double a, b, alpha, beta, d_cross, rho;
};

inline CoefficientValues evaluate(const BoundaryCoefficients& bc, double theta) {
  return {bc.a(theta), bc.b(theta), bc.alpha(theta), bc.beta(theta), bc.d_cross(theta), bc.rho(theta)};
}

/// Throws NonPositiveCoefficient naming the function, boundary and angle on a
/// dense sample grid. `boundary` is the 1-based label used in messages.
void validate_coefficients(const BoundaryCoefficients& bc, int boundary);

struct BoundarySpec {
  Vec2 center{};        // hole center (torus / plane); unused for the cylinder
  double radius = 0.0;  // hole radius (torus / plane)
  BoundaryCoefficients coefficients;
};

struct InteriorSpec {
  double delta = 0.1;         // tube width; normal form on |z| <= delta/2, blend on [delta/2, delta]
  double height = 1.0;        // cylinder height (boundaries at r = 0 and r = height)
  double perturbation = 0.5;  // interior perturbation is perturbation * Laplacian
};

enum class Region { Interior, Tube };

/// Result of tubular_coords. For Tube, (k, cell, theta, z) are the tube
/// coordinates; z is signed only in the periodic plane (both sides of a hole).
struct ChartLocation {
  Region region = Region::Interior;
  int k = -1;
  Cell cell{};
  double theta = 0.0;
  double z = 0.0;
  Vec2 point{};
};

/// Generator coefficients L u = sum diffusion_ij d_ij u + sum drift_i d_i u. In a
/// tube the components are (theta, z); in the interior they are ambient.
struct LocalGenerator {
  Vec2 drift{};
  Mat2 diffusion{};
};

class Model {
 public:
  static Model build(GeometryKind kind, std::vector<BoundarySpec> boundaries, InteriorSpec interior);

  GeometryKind kind() const { return kind_; }
  int boundary_count() const { return static_cast<int>(boundaries_.size()); }
  const BoundarySpec& boundary(int k) const { return boundaries_[k]; }
  const BoundaryCoefficients& coefficients(int k) const { return boundaries_[k].coefficients; }
  const InteriorSpec& interior() const { return interior_; }
  double delta() const { return interior_.delta; }
  bool two_sided() const { return kind_ == GeometryKind::PeriodicPlane; }

  /// Tubular coordinates of an ambient point. Throws OutsideDomain.
  ChartLocation tubular_coords(Vec2 point) const;
  /// Like tubular_coords but never throws: points beyond a one-sided boundary
  /// come back as Tube locations with z < 0.
  ChartLocation locate(Vec2 point) const;
  Vec2 from_tube(int k, Cell cell, double theta, double z) const;

  /// Canonical representative (angles / torus coordinates wrapped; plane unchanged).
  Vec2 canonical(Vec2 point) const;
  bool in_domain(Vec2 point) const;

  /// Signed distance from the point to boundary k of the given cell.
  double surface_distance(Vec2 point, int k, Cell cell) const;

  LocalGenerator tube_generator(int k, double theta, double z, double eps) const;
  LocalGenerator interior_generator(double eps) const;
  /// Coefficients at an arbitrary point, in the coordinates of its chart.
  LocalGenerator drift_diffusion(Vec2 point, double eps, ChartLocation* where = nullptr) const;
  LocalGenerator drift_diffusion(const ChartLocation& loc, double eps) const;

  /// Bounding box of the interior bins: cylinder (theta, r), otherwise the unit cell.
  Vec2 box_lo() const;
  Vec2 box_hi() const;

  /// Metric factor g^{theta theta} of the flat ambient metric in tube coordinates.
  double tangential_metric(int k, double z) const;

 private:
  GeometryKind kind_ = GeometryKind::Cylinder;
  std::vector<BoundarySpec> boundaries_;
  InteriorSpec interior_;
};

/// C^1 weight: 1 for s <= delta/2, 0 for s >= delta, smoothstep in between.
double blend_weight(double s, double delta);

/// Gamma_kappa = {(theta, z): phi(theta)^{1/gamma} |z| = kappa} around boundary k.
class LevelSet {
 public:
  LevelSet(int k, double kappa, double gamma, std::vector<double> phi_grid, Cell cell = {});

  int boundary() const { return k_; }
  Cell cell() const { return cell_; }
  double kappa() const { return kappa_; }
  double gamma() const { return gamma_; }

  double log_phi(double theta) const { return log_phi_.size() == 1 ? log_phi_[0] : interpolate(theta); }
  double log_phi_derivative(double theta) const {
    return log_phi_.size() == 1 ? 0.0 : interpolate_derivative(theta);
  }
  /// Distance of the level curve from the boundary at angle theta.
  double z_at(double theta) const { return kappa_ * std::exp(-log_phi(theta) / gamma_); }
  /// ln|z| + ln(phi)/gamma - ln(kappa): negative between S and the curve, positive beyond.
  double functional(double theta, double z) const {
    return std::log(std::abs(z)) + log_phi(theta) / gamma_ - log_kappa_;
  }
  bool contains(double theta, double z, double tol = 1e-12) const {
    return std::abs(functional(theta, z)) <= tol;
  }
  /// Largest z on the curve; used for chart validity.
  double max_z() const;

 private:
  double interpolate(double theta) const;
  double interpolate_derivative(double theta) const;

  int k_;
  Cell cell_;
  double kappa_;
  double log_kappa_;
  double gamma_;
  std::vector<double> log_phi_;
};

}  // namespace degenflow
