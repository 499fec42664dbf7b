#include "degenflow/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "degenflow/error.hpp"

namespace degenflow {

namespace {

constexpr double kFar = 1e300;

struct Chol {
  double l00, l10, l11;
};

Chol cholesky(const Mat2& c) {
  const double l00 = std::sqrt(std::max(0.0, c.xx));
  const double l10 = l00 > 0.0 ? c.xy / l00 : 0.0;
  const double l11 = std::sqrt(std::max(0.0, c.yy - l10 * l10));
  return {l00, l10, l11};
}

double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

bool crossed(TargetKind kind, double f0, double f1) {
  if (kind == TargetKind::Surface) return f0 > 0.0 && f1 <= 0.0;
  return (f0 < 0.0 && f1 >= 0.0) || (f0 > 0.0 && f1 <= 0.0);
}

bool pinned(const PathState& s, double eps) { return eps == 0.0 && s.in_tube && s.z == 0.0; }

Chart chart_for(const Model& model, const SimConfig& config, const PathState& s);

}  // namespace

const char* to_string(Chart chart) {
  switch (chart) {
    case Chart::Interior: return "interior";
    case Chart::Tube: return "tube";
    case Chart::Log: return "log";
    case Chart::Micro: return "micro";
  }
  return "unknown";
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::HitTarget: return "hit_target";
    case StopReason::Absorbed: return "absorbed";
    case StopReason::TimeBudget: return "time_budget";
    case StopReason::EndTime: return "end_time";
  }
  return "unknown";
}

void SimConfig::validate(const Model& m) const {
  if (!(eps >= 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be nonnegative");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  for (double mult : {dt_interior, dt_tube, dt_log, dt_micro}) {
    if (!(mult > 0.0)) throw Error(ErrorCode::InvalidArgument, "chart step multipliers must be positive");
  }
  if (!(log_upper_fraction > 0.0 && log_upper_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "log chart fraction must lie in (0, 1)");
  }
  if (eps > 0.0 && !(c_micro > 0.0 && micro_upper() < log_upper(m))) {
    throw Error(ErrorCode::InvalidArgument, "micro chart threshold must lie below the log chart threshold");
  }
  if (!(z_hit > 0.0)) throw Error(ErrorCode::InvalidArgument, "z_hit must be positive");
  if (!(max_time > 0.0)) throw Error(ErrorCode::InvalidArgument, "max_time must be positive");
  if (refine_levels < 0) throw Error(ErrorCode::InvalidArgument, "refine_levels must be nonnegative");
}

Simulator::Simulator(const Model& model, SimConfig config) : model_(&model), config_(config) {
  config_.validate(model);
}

double Simulator::chart_dt(Chart c) const {
  switch (c) {
    case Chart::Interior: return config_.dt * config_.dt_interior;
    case Chart::Tube: return config_.dt * config_.dt_tube;
    case Chart::Log: return config_.dt * config_.dt_log;
    case Chart::Micro: return config_.dt * config_.dt_micro;
  }
  return config_.dt;
}

void Simulator::assign_chart(PathState& s) const { s.chart = chart_for(*model_, config_, s); }

void Simulator::settle(PathState& s) const {
  if (s.in_tube && std::abs(s.z) >= model_->delta()) {
    s.point = model_->from_tube(s.k, s.cell, s.theta, s.z);
    const auto loc = model_->locate(s.point);
    s.in_tube = loc.region == Region::Tube;
    if (s.in_tube) {
      s.k = loc.k;
      s.cell = loc.cell;
      s.theta = loc.theta;
      s.z = loc.z;
    }
  }
  assign_chart(s);
  if (s.chart == Chart::Interior) s.point = model_->canonical(s.point);
}

namespace {

Chart chart_for(const Model& model, const SimConfig& config, const PathState& s) {
  if (!s.in_tube) return Chart::Interior;
  const double az = std::abs(s.z);
  if (config.eps > 0.0 && az <= config.micro_upper()) return Chart::Micro;
  if (az <= config.log_upper(model)) return Chart::Log;
  return Chart::Tube;
}

}  // namespace

Vec2 ambient(const Model& model, const PathState& s) {
  if (!s.in_tube) return s.point;
  return model.canonical(model.from_tube(s.k, s.cell, s.theta, s.z));
}

PathState state_at(const Model& model, Vec2 point, const SimConfig& config) {
  const auto loc = model.tubular_coords(point);
  PathState s;
  s.point = loc.point;
  s.in_tube = loc.region == Region::Tube;
  if (s.in_tube) {
    s.k = loc.k;
    s.cell = loc.cell;
    s.theta = loc.theta;
    s.z = loc.z;
  }
  s.chart = chart_for(model, config, s);
  return s;
}

PathState state_on_tube(const Model& model, int k, double theta, double z, const SimConfig& config, Cell cell) {
  if (k < 0 || k >= model.boundary_count()) throw Error(ErrorCode::InvalidArgument, "boundary index out of range");
  if (!(std::abs(z) < model.delta())) throw Error(ErrorCode::OutsideDomain, "z outside the tube");
  if (z < 0.0 && !model.two_sided()) throw Error(ErrorCode::OutsideDomain, "negative z on a one-sided boundary");
  PathState s;
  s.in_tube = true;
  s.k = k;
  s.cell = cell;
  s.theta = wrap_angle(theta);
  s.z = z;
  s.point = model.from_tube(k, cell, s.theta, z);
  s.chart = chart_for(model, config, s);
  return s;
}

Simulator::Coords Simulator::to_chart(const PathState& s) const {
  switch (s.chart) {
    case Chart::Interior: return {s.point.x, s.point.y};
    case Chart::Tube: return {s.theta, s.z};
    case Chart::Log: return {s.theta, s.z == 0.0 ? 0.0 : std::log(std::abs(s.z))};
    case Chart::Micro: return {s.theta, s.z / config_.eps};
  }
  return {0.0, 0.0};
}

PathState Simulator::from_chart(const PathState& ref, Coords c) const {
  PathState s = ref;
  switch (ref.chart) {
    case Chart::Interior: {
      s.point = {c.x0, c.x1};
      const auto loc = model_->locate(s.point);
      s.in_tube = loc.region == Region::Tube;
      if (s.in_tube) {
        s.k = loc.k;
        s.cell = loc.cell;
        s.theta = loc.theta;
        s.z = loc.z;
      }
      return s;
    }
    case Chart::Tube:
      s.theta = wrap_angle(c.x0);
      s.z = c.x1;
      return s;
    case Chart::Log:
      s.theta = wrap_angle(c.x0);
      if (!pinned(ref, config_.eps)) s.z = sign_of(ref.z) * std::exp(c.x1);
      return s;
    case Chart::Micro:
      s.theta = wrap_angle(c.x0);
      s.z = config_.eps * c.x1;
      return s;
  }
  return s;
}

void Simulator::chart_coefficients(const PathState& s, Vec2& drift, Mat2& cov) const {
  if (s.chart == Chart::Interior) {
    const auto g = model_->interior_generator(config_.eps);
    drift = g.drift;
    cov = {2.0 * g.diffusion.xx, 2.0 * g.diffusion.xy, 2.0 * g.diffusion.yy};
    return;
  }
  const auto g = model_->tube_generator(s.k, s.theta, s.z, config_.eps);
  switch (s.chart) {
    case Chart::Tube:
      drift = g.drift;
      cov = {2.0 * g.diffusion.xx, 2.0 * g.diffusion.xy, 2.0 * g.diffusion.yy};
      return;
    case Chart::Log: {
      if (pinned(s, config_.eps)) {
        drift = {g.drift.x, 0.0};
        cov = {2.0 * g.diffusion.xx, 0.0, 0.0};
        return;
      }
      const double z = s.z;
      drift = {g.drift.x, g.drift.y / z - g.diffusion.yy / (z * z)};
      cov = {2.0 * g.diffusion.xx, 2.0 * g.diffusion.xy / z, 2.0 * g.diffusion.yy / (z * z)};
      return;
    }
    case Chart::Micro: {
      const double e = config_.eps;
      drift = {g.drift.x, g.drift.y / e};
      cov = {2.0 * g.diffusion.xx, 2.0 * g.diffusion.xy / e, 2.0 * g.diffusion.yy / (e * e)};
      return;
    }
    case Chart::Interior: break;
  }
}

double Simulator::functional(const Target& tg, const PathState& s, double ref_sign) const {
  const bool own = s.in_tube && s.k == tg.k &&
                   (tg.any_cell ? !(tg.exclude_cell && s.cell == tg.cell) : s.cell == tg.cell);
  switch (tg.kind) {
    case TargetKind::Level:
      if (!own) return kFar;
      return tg.level->functional(s.theta, std::max(std::abs(s.z), 1e-300));
    case TargetKind::Surface:
      if (!own) return kFar;
      if (config_.eps > 0.0) return ref_sign * s.z / config_.eps - config_.z_hit;
      return ref_sign * s.z;
    case TargetKind::Curve: {
      if (s.in_tube && s.k == tg.k && s.cell == tg.cell) return s.z - tg.distance;
      const Vec2 p = s.chart == Chart::Interior ? s.point : model_->from_tube(s.k, s.cell, s.theta, s.z);
      return model_->surface_distance(p, tg.k, tg.cell) - tg.distance;
    }
  }
  return kFar;
}

bool Simulator::in_target(const Target& tg, const PathState& s) const {
  const double f = functional(tg, s, s.in_tube ? sign_of(s.z) : 1.0);
  if (tg.kind == TargetKind::Surface) return f <= 0.0;
  return std::abs(f) <= 1e-12;
}

bool Simulator::bridge_gap(const Target& tg, const PathState& s, double ref_sign, double& gap, double& g0,
                           double& g1) const {
  if (!s.in_tube || s.k != tg.k || s.chart == Chart::Interior) return false;
  const double sz = sign_of(s.z);
  const double az = std::abs(s.z);
  switch (tg.kind) {
    case TargetKind::Level: {
      if (s.chart == Chart::Log) {
        gap = tg.level->functional(s.theta, std::max(az, 1e-300));
        g0 = tg.level->log_phi_derivative(s.theta) / tg.level->gamma();
        g1 = 1.0;
        return true;
      }
      const double zs = tg.level->z_at(s.theta);
      const double dzs = -zs * tg.level->log_phi_derivative(s.theta) / tg.level->gamma();
      const double scale = s.chart == Chart::Micro ? config_.eps : 1.0;
      gap = (az - zs) / scale;
      g0 = -dzs / scale;
      g1 = sz;
      return true;
    }
    case TargetKind::Surface:
      if (s.chart != Chart::Micro) return false;
      gap = ref_sign * s.z / config_.eps - config_.z_hit;
      g0 = 0.0;
      g1 = ref_sign;
      return true;
    case TargetKind::Curve:
      if (!(s.cell == tg.cell) || s.z <= 0.0) return false;
      g0 = 0.0;
      g1 = 1.0;
      if (s.chart == Chart::Log) gap = std::log(s.z) - std::log(tg.distance);
      else if (s.chart == Chart::Micro) gap = (s.z - tg.distance) / config_.eps;
      else gap = s.z - tg.distance;
      return true;
  }
  return false;
}

void Simulator::project(const Target& tg, PathState& s) const {
  switch (tg.kind) {
    case TargetKind::Level:
      if (s.in_tube) s.z = sign_of(s.z) * tg.level->z_at(s.theta);
      break;
    case TargetKind::Surface:
      if (s.in_tube) s.z = 0.0;
      break;
    case TargetKind::Curve:
      if (s.in_tube && s.k == tg.k && s.cell == tg.cell) {
        s.z = tg.distance;
      } else if (model_->kind() == GeometryKind::Cylinder) {
        s.point.y = tg.k == 0 ? tg.distance : model_->interior().height - tg.distance;
      }
      break;
  }
  if (s.in_tube && std::abs(s.z) < model_->delta()) {
    s.point = model_->from_tube(s.k, s.cell, s.theta, s.z);
  } else if (s.in_tube) {
    settle(s);
    return;
  } else {
    const auto loc = model_->locate(s.point);
    s.in_tube = loc.region == Region::Tube;
    if (s.in_tube) {
      s.k = loc.k;
      s.cell = loc.cell;
      s.theta = loc.theta;
      s.z = loc.z;
    }
  }
  assign_chart(s);
}

bool Simulator::reflect(PathState& s) const {
  if (model_->two_sided() || !s.in_tube || s.z >= 0.0) return false;
  s.z = -s.z;
  if (s.chart == Chart::Interior) s.point = model_->from_tube(s.k, s.cell, s.theta, s.z);
  return true;
}

void Simulator::step(PathState& state, PathRng& rng) const {
  static const std::vector<Target> none;
  state = first_hit(state, none, rng, state.t + chart_dt(state.chart)).terminal;
}

PathOutcome Simulator::first_hit(PathState s, const std::vector<Target>& targets, PathRng& rng, double horizon,
                                 const StepObserver* observer) const {
  PathOutcome out;
  const double t_start = s.t;
  const double budget_end = t_start + config_.max_time;
  const bool has_horizon = horizon >= 0.0;
  const double t_end = has_horizon ? std::min(horizon, budget_end) : budget_end;

  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (in_target(targets[i], s)) {
      out.reason = targets[i].kind == TargetKind::Surface ? StopReason::Absorbed : StopReason::HitTarget;
      out.target = static_cast<int>(i);
      out.terminal = s;
      out.time = 0.0;
      return out;
    }
  }

  // Functional values at the start of the current step, with the sign used.
  std::vector<double> f_prev(targets.size()), rs_prev(targets.size(), 0.0);
  while (s.t < t_end) {
    const double dt = std::min(chart_dt(s.chart), t_end - s.t);
    if (dt <= 1e-15 * std::max(1.0, s.t)) break;
    Vec2 drift;
    Mat2 cov;
    chart_coefficients(s, drift, cov);
    const Chol L = cholesky(cov);
    const Coords c0 = to_chart(s);
    const double sq = std::sqrt(dt);
    const double n0 = rng.normal();
    const double n1 = rng.normal();
    Coords c1{c0.x0 + drift.x * dt + sq * L.l00 * n0, c0.x1 + drift.y * dt + sq * (L.l10 * n0 + L.l11 * n1)};
    if (!std::isfinite(c1.x0) || !std::isfinite(c1.x1) || std::abs(c1.x0) > 1e6 || std::abs(c1.x1) > 1e6) {
      throw Error(ErrorCode::StepBlowup, "coordinate magnitude exceeded 1e6 in the " + std::string(to_string(s.chart)) +
                                             " chart");
    }
    PathState s1 = from_chart(s, c1);
    s1.t = s.t + dt;
    ++out.steps[static_cast<int>(s.chart)];

    // Target crossings within the step; keep the earliest.
    int hit = -1;
    double hit_time = std::numeric_limits<double>::infinity();
    PathState hit_state;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& tg = targets[i];
      const bool own0 = s.in_tube && s.k == tg.k;
      const double rs = own0 ? sign_of(s.z) : (s1.in_tube ? sign_of(s1.z) : 1.0);
      if (rs != rs_prev[i]) {
        f_prev[i] = functional(tg, s, rs);
        rs_prev[i] = rs;
      }
      const double f0 = f_prev[i];
      const double f1 = functional(tg, s1, rs);
      f_prev[i] = f1;
      if (crossed(tg.kind, f0, f1)) {
        Coords ca = c0, cb = c1;
        double fa = f0, fb = f1, ta = 0.0, h = dt;
        for (int level = 0; level < config_.refine_levels; ++level) {
          const double sh = std::sqrt(h / 4.0);
          const double m0 = rng.normal();
          const double m1 = rng.normal();
          const Coords cm{0.5 * (ca.x0 + cb.x0) + sh * L.l00 * m0,
                          0.5 * (ca.x1 + cb.x1) + sh * (L.l10 * m0 + L.l11 * m1)};
          const double fm = functional(tg, from_chart(s, cm), rs);
          if (crossed(tg.kind, fa, fm)) {
            cb = cm;
            fb = fm;
          } else {
            ca = cm;
            fa = fm;
            ta += 0.5 * h;
          }
          h *= 0.5;
        }
        double frac = 0.5;
        if (std::abs(fa) < kFar && std::abs(fb) < kFar && fa != fb) frac = std::clamp(fa / (fa - fb), 0.0, 1.0);
        const double th = s.t + ta + frac * h;
        if (th < hit_time) {
          hit_time = th;
          hit = static_cast<int>(i);
          hit_state = from_chart(s, {ca.x0 + frac * (cb.x0 - ca.x0), ca.x1 + frac * (cb.x1 - ca.x1)});
        }
      } else if (config_.bridge && std::abs(f0) < kFar && std::abs(f1) < kFar && f0 * f1 > 0.0 &&
                 (tg.kind != TargetKind::Surface || f0 > 0.0)) {
        double d0 = 0.0, d1 = 0.0, g0 = 0.0, g1 = 0.0, h0 = 0.0, h1 = 0.0;
        double arg = kFar;
        if (bridge_gap(tg, s, rs, d0, g0, g1) && bridge_gap(tg, s1, rs, d1, h0, h1) && d0 * d1 > 0.0) {
          const double v = g0 * g0 * cov.xx + 2.0 * g0 * g1 * cov.xy + g1 * g1 * cov.yy;
          if (v > 0.0) arg = 2.0 * d0 * d1 / (v * dt);
        }
        if (arg < 40.0) {
          const double p = std::exp(-arg);
          if (rng.uniform() < p) {
            const double th = s.t + 0.5 * dt;
            if (th < hit_time) {
              hit_time = th;
              hit = static_cast<int>(i);
              hit_state = from_chart(s, {0.5 * (c0.x0 + c1.x0), 0.5 * (c0.x1 + c1.x1)});
            }
          }
        }
      }
    }

    if (observer != nullptr) (*observer)(s, hit >= 0 ? hit_time - s.t : dt);

    if (hit >= 0) {
      const auto& tg = targets[hit];
      hit_state.t = hit_time;
      project(tg, hit_state);
      out.reason = tg.kind == TargetKind::Surface ? StopReason::Absorbed : StopReason::HitTarget;
      out.target = hit;
      out.terminal = hit_state;
      out.time = hit_time - t_start;
      return out;
    }

    if (reflect(s1)) std::fill(rs_prev.begin(), rs_prev.end(), 0.0);
    const Chart before = s.chart;
    settle(s1);
    if (s1.chart != before) ++out.chart_switches;
    s = s1;
  }

  out.reason = (has_horizon && horizon <= budget_end) ? StopReason::EndTime : StopReason::TimeBudget;
  out.terminal = s;
  out.time = s.t - t_start;
  return out;
}

PathOutcome Simulator::run_reflected(PathState start, double T, PathRng& rng, const StepObserver* observer) const {
  static const std::vector<Target> none;
  return first_hit(start, none, rng, start.t + T, observer);
}

}  // namespace degenflow
