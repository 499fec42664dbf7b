#include "degenflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "degenflow/error.hpp"

namespace degenflow {

namespace {

constexpr int kValidationSamples = 2048;

double round_half(double v) { return std::floor(v + 0.5); }

Vec2 min_image(Vec2 d) { return {d.x - round_half(d.x), d.y - round_half(d.y)}; }

std::string describe(const char* function, int boundary, double theta, double value) {
  std::ostringstream os;
  os << function << " = " << value << " on boundary " << boundary << " at theta=" << theta;
  return os.str();
}

}  // namespace

std::string to_string(GeometryKind kind) {
  switch (kind) {
    case GeometryKind::Cylinder: return "cylinder";
    case GeometryKind::TorusWithHoles: return "torus_with_holes";
    case GeometryKind::PeriodicPlane: return "periodic_plane";
  }
  return "unknown";
}

GeometryKind geometry_kind_from_string(const std::string& name) {
  if (name == "cylinder") return GeometryKind::Cylinder;
  if (name == "torus_with_holes") return GeometryKind::TorusWithHoles;
  if (name == "periodic_plane") return GeometryKind::PeriodicPlane;
  throw Error(ErrorCode::InvalidArgument, "unknown geometry kind '" + name + "'");
}

void validate_coefficients(const BoundaryCoefficients& bc, int boundary) {
  if (bc.remainder_scale < 0.0) {
    throw Error(ErrorCode::NonPositiveCoefficient,
                describe("remainder_scale", boundary, 0.0, bc.remainder_scale));
  }
  for (int i = 0; i < kValidationSamples; ++i) {
    const double theta = kTwoPi * i / kValidationSamples;
    const auto v = evaluate(bc, theta);
    if (!(v.a > 0.0)) throw Error(ErrorCode::NonPositiveCoefficient, describe("a", boundary, theta, v.a));
    if (!(v.alpha > 0.0)) {
      throw Error(ErrorCode::NonPositiveCoefficient, describe("alpha", boundary, theta, v.alpha));
    }
    if (!(v.rho > 0.0)) throw Error(ErrorCode::NonPositiveCoefficient, describe("rho", boundary, theta, v.rho));
    // The (theta, z) block [[a/2, z d/2], [z d/2, z^2 alpha]] must stay positive definite.
    if (!(v.d_cross * v.d_cross < 2.0 * v.a * v.alpha)) {
      throw Error(ErrorCode::NonPositiveCoefficient,
                  describe("2*a*alpha - d_cross^2", boundary, theta, 2.0 * v.a * v.alpha - v.d_cross * v.d_cross));
    }
  }
}

double blend_weight(double s, double delta) {
  const double half = 0.5 * delta;
  if (s <= half) return 1.0;
  if (s >= delta) return 0.0;
  const double u = (s - half) / half;
  return 1.0 - u * u * (3.0 - 2.0 * u);
}

Model Model::build(GeometryKind kind, std::vector<BoundarySpec> boundaries, InteriorSpec interior) {
  if (boundaries.empty()) throw Error(ErrorCode::InvalidArgument, "at least one boundary is required");
  if (!(interior.delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  if (!(interior.perturbation > 0.0)) throw Error(ErrorCode::InvalidArgument, "perturbation must be positive");
  for (std::size_t k = 0; k < boundaries.size(); ++k) {
    validate_coefficients(boundaries[k].coefficients, static_cast<int>(k) + 1);
  }
  const double delta = interior.delta;
  switch (kind) {
    case GeometryKind::Cylinder:
      if (boundaries.size() != 2) throw Error(ErrorCode::InvalidArgument, "a cylinder has exactly two boundaries");
      if (interior.height < 2.0 * delta) {
        throw Error(ErrorCode::OverlappingTubes, "cylinder height is below 2*delta");
      }
      break;
    case GeometryKind::TorusWithHoles:
    case GeometryKind::PeriodicPlane:
      if (kind == GeometryKind::PeriodicPlane && boundaries.size() != 1) {
        throw Error(ErrorCode::InvalidArgument, "the periodic plane carries one hole per unit cell");
      }
      for (std::size_t i = 0; i < boundaries.size(); ++i) {
        const auto& bi = boundaries[i];
        if (!(bi.radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "hole radius must be positive");
        if (1.0 - 2.0 * bi.radius < 2.0 * delta) {
          throw Error(ErrorCode::OverlappingTubes, "hole " + std::to_string(i + 1) + " overlaps its periodic image");
        }
        if (kind == GeometryKind::PeriodicPlane && bi.radius <= delta) {
          throw Error(ErrorCode::OverlappingTubes, "inner tube does not fit inside the hole");
        }
        for (std::size_t j = i + 1; j < boundaries.size(); ++j) {
          const auto& bj = boundaries[j];
          const double gap = norm(min_image(bi.center - bj.center)) - bi.radius - bj.radius;
          if (gap < 2.0 * delta) {
            throw Error(ErrorCode::OverlappingTubes,
                        "holes " + std::to_string(i + 1) + " and " + std::to_string(j + 1) + " are closer than 2*delta");
          }
        }
      }
      break;
  }
  Model model;
  model.kind_ = kind;
  model.boundaries_ = std::move(boundaries);
  model.interior_ = interior;
  return model;
}

Vec2 Model::canonical(Vec2 p) const {
  switch (kind_) {
    case GeometryKind::Cylinder: return {wrap_angle(p.x), p.y};
    case GeometryKind::TorusWithHoles: return {p.x - std::floor(p.x), p.y - std::floor(p.y)};
    case GeometryKind::PeriodicPlane: return p;
  }
  return p;
}

bool Model::in_domain(Vec2 p) const {
  try {
    (void)tubular_coords(p);
    return true;
  } catch (const Error&) {
    return false;
  }
}

ChartLocation Model::tubular_coords(Vec2 point) const {
  const auto loc = locate(point);
  if (loc.region == Region::Tube && loc.z < 0.0 && !two_sided()) {
    throw Error(ErrorCode::OutsideDomain, "point lies inside boundary component " + std::to_string(loc.k + 1));
  }
  return loc;
}

ChartLocation Model::locate(Vec2 point) const {
  ChartLocation loc;
  const double delta = interior_.delta;
  switch (kind_) {
    case GeometryKind::Cylinder: {
      const double height = interior_.height;
      loc.point = {wrap_angle(point.x), point.y};
      if (point.y < delta && point.y <= height - point.y) {
        loc.region = Region::Tube;
        loc.k = 0;
        loc.theta = loc.point.x;
        loc.z = point.y;
      } else if (height - point.y < delta) {
        loc.region = Region::Tube;
        loc.k = 1;
        loc.theta = loc.point.x;
        loc.z = height - point.y;
      }
      return loc;
    }
    case GeometryKind::TorusWithHoles: {
      loc.point = canonical(point);
      for (int k = 0; k < boundary_count(); ++k) {
        const auto& hole = boundaries_[k];
        const Vec2 d = min_image(loc.point - hole.center);
        const double r = norm(d);
        const double z = r - hole.radius;
        if (z < delta) {
          loc.region = Region::Tube;
          loc.k = k;
          loc.theta = wrap_angle(std::atan2(d.y, d.x));
          loc.z = z;
          return loc;
        }
      }
      return loc;
    }
    case GeometryKind::PeriodicPlane: {
      loc.point = point;
      const auto& hole = boundaries_[0];
      const Vec2 rel = point - hole.center;
      const Cell cell{static_cast<int>(round_half(rel.x)), static_cast<int>(round_half(rel.y))};
      const Vec2 d{rel.x - cell.i, rel.y - cell.j};
      const double z = norm(d) - hole.radius;
      if (std::abs(z) < delta) {
        loc.region = Region::Tube;
        loc.k = 0;
        loc.cell = cell;
        loc.theta = wrap_angle(std::atan2(d.y, d.x));
        loc.z = z;
      }
      return loc;
    }
  }
  return loc;
}

Vec2 Model::from_tube(int k, Cell cell, double theta, double z) const {
  switch (kind_) {
    case GeometryKind::Cylinder:
      return {wrap_angle(theta), k == 0 ? z : interior_.height - z};
    case GeometryKind::TorusWithHoles: {
      const auto& hole = boundaries_[k];
      const double r = hole.radius + z;
      return canonical({hole.center.x + r * std::cos(theta), hole.center.y + r * std::sin(theta)});
    }
    case GeometryKind::PeriodicPlane: {
      const auto& hole = boundaries_[k];
      const double r = hole.radius + z;
      return {hole.center.x + cell.i + r * std::cos(theta), hole.center.y + cell.j + r * std::sin(theta)};
    }
  }
  return {};
}

double Model::surface_distance(Vec2 point, int k, Cell cell) const {
  switch (kind_) {
    case GeometryKind::Cylinder: return k == 0 ? point.y : interior_.height - point.y;
    case GeometryKind::TorusWithHoles:
      return norm(min_image(point - boundaries_[k].center)) - boundaries_[k].radius;
    case GeometryKind::PeriodicPlane: {
      const Vec2 c{boundaries_[k].center.x + cell.i, boundaries_[k].center.y + cell.j};
      return norm(point - c) - boundaries_[k].radius;
    }
  }
  return 0.0;
}

double Model::tangential_metric(int k, double z) const {
  if (kind_ == GeometryKind::Cylinder) return 1.0;
  const double r = boundaries_[k].radius + z;
  return 1.0 / (r * r);
}

LocalGenerator Model::interior_generator(double eps) const {
  const double g = 0.5 + eps * eps * interior_.perturbation;
  return {{0.0, 0.0}, {g, 0.0, g}};
}

LocalGenerator Model::tube_generator(int k, double theta, double z, double eps) const {
  const auto& bc = boundaries_[k].coefficients;
  const auto v = evaluate(bc, theta);
  const double s = std::abs(z);
  const double delta = interior_.delta;
  const double w = blend_weight(s, delta);
  const double metric = tangential_metric(k, z);
  const double radial_drift = kind_ == GeometryKind::Cylinder ? 0.0 : 0.5 / (boundaries_[k].radius + z);
  const double rs = bc.remainder_scale;
  const double eps2 = eps * eps;
  const double pert = interior_.perturbation;

  LocalGenerator g;
  // Unperturbed operator: normal form blended into the interior half-Laplacian.
  g.diffusion.xx = w * 0.5 * v.a + (1.0 - w) * 0.5 * metric;
  g.diffusion.xy = w * 0.5 * z * v.d_cross;
  g.diffusion.yy = w * (z * z * v.alpha + rs * s * s * s) + (1.0 - w) * 0.5;
  g.drift.x = w * v.b;
  g.drift.y = w * (z * v.beta + rs * z * s) + (1.0 - w) * radial_drift;
  // Perturbation: pert * Laplacian with its normal coefficient replaced by rho near S.
  g.diffusion.xx += eps2 * pert * metric;
  g.diffusion.yy += eps2 * (w * v.rho + (1.0 - w) * pert);
  g.drift.y += eps2 * 2.0 * pert * radial_drift;
  return g;
}

LocalGenerator Model::drift_diffusion(const ChartLocation& loc, double eps) const {
  if (loc.region == Region::Tube) return tube_generator(loc.k, loc.theta, loc.z, eps);
  return interior_generator(eps);
}

LocalGenerator Model::drift_diffusion(Vec2 point, double eps, ChartLocation* where) const {
  const auto loc = tubular_coords(point);
  if (where != nullptr) *where = loc;
  return drift_diffusion(loc, eps);
}

Vec2 Model::box_lo() const { return {0.0, 0.0}; }

Vec2 Model::box_hi() const {
  if (kind_ == GeometryKind::Cylinder) return {kTwoPi, interior_.height};
  return {1.0, 1.0};
}

LevelSet::LevelSet(int k, double kappa, double gamma, std::vector<double> phi_grid, Cell cell)
    : k_(k), cell_(cell), kappa_(kappa), gamma_(gamma) {
  if (!(kappa > 0.0)) throw Error(ErrorCode::LevelOutOfChart, "kappa must be strictly positive");
  if (gamma == 0.0) throw Error(ErrorCode::InvalidArgument, "gamma must be nonzero");
  if (phi_grid.size() < 4) throw Error(ErrorCode::InvalidArgument, "phi grid needs at least 4 nodes");
  log_kappa_ = std::log(kappa);
  log_phi_.reserve(phi_grid.size());
  for (double p : phi_grid) {
    if (!(p > 0.0)) throw Error(ErrorCode::NonPositiveEigenfunction, "phi must be positive on the whole circle");
    log_phi_.push_back(std::log(p));
  }
  const bool flat = std::all_of(log_phi_.begin(), log_phi_.end(), [&](double v) { return v == log_phi_.front(); });
  if (flat) log_phi_.resize(1);
}

double LevelSet::interpolate(double theta) const {
  const std::size_t n = log_phi_.size();
  const double h = kTwoPi / static_cast<double>(n);
  const double u = wrap_angle(theta) / h;
  const auto i1 = static_cast<std::size_t>(u) % n;
  const double t = u - std::floor(u);
  const double p0 = log_phi_[(i1 + n - 1) % n];
  const double p1 = log_phi_[i1];
  const double p2 = log_phi_[(i1 + 1) % n];
  const double p3 = log_phi_[(i1 + 2) % n];
  // Catmull-Rom cubic.
  return p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
}

double LevelSet::interpolate_derivative(double theta) const {
  const std::size_t n = log_phi_.size();
  const double h = kTwoPi / static_cast<double>(n);
  const double u = wrap_angle(theta) / h;
  const auto i1 = static_cast<std::size_t>(u) % n;
  const double t = u - std::floor(u);
  const double p0 = log_phi_[(i1 + n - 1) % n];
  const double p1 = log_phi_[i1];
  const double p2 = log_phi_[(i1 + 1) % n];
  const double p3 = log_phi_[(i1 + 2) % n];
  const double dt = 0.5 * (p2 - p0 + t * (2.0 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) +
                                          t * 3.0 * (3.0 * (p1 - p2) + p3 - p0)));
  return dt / h;
}

double LevelSet::max_z() const {
  double best = 0.0;
  const int samples = std::max<int>(256, 4 * static_cast<int>(log_phi_.size()));
  for (int i = 0; i < samples; ++i) best = std::max(best, z_at(kTwoPi * i / samples));
  return best;
}

}  // namespace degenflow
