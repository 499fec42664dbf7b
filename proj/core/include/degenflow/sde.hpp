#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "degenflow/geometry.hpp"
#include "degenflow/rng.hpp"

namespace degenflow {

/// Interior: ambient coordinates. Tube: (theta, z). Log: (theta, ln|z|).
/// Micro: (theta, z / eps).
enum class Chart { Interior = 0, Tube = 1, Log = 2, Micro = 3 };

const char* to_string(Chart chart);

struct SimConfig {
  double eps = 0.0;
  double dt = 1e-3;
  double dt_interior = 1.0;  // per-chart multipliers of dt
  double dt_tube = 1.0;
  double dt_log = 10.0;
  double dt_micro = 2.0;
  double c_micro = 10.0;           // micro chart for |z| <= c_micro * eps
  double log_upper_fraction = 0.5;  // log chart for |z| <= fraction * delta
  double z_hit = 1e-3;              // boundary hit at |z| / eps <= z_hit
  double max_time = 1e4;
  bool bridge = true;       // Brownian-bridge crossing probability inside steps
  int refine_levels = 4;    // bisection levels for crossing times

  double micro_upper() const { return c_micro * eps; }
  double log_upper(const Model& m) const { return log_upper_fraction * m.delta(); }
  /// Throws InvalidArgument when the thresholds are inconsistent.
  void validate(const Model& m) const;
};

struct PathState {
  Chart chart = Chart::Interior;
  bool in_tube = false;
  int k = -1;
  Cell cell{};
  double theta = 0.0;
  double z = 0.0;
  Vec2 point{};  // ambient position; current in the interior chart, see ambient()
  double t = 0.0;
};

/// Ambient position of a state in any chart.
Vec2 ambient(const Model& model, const PathState& s);

/// State at an ambient point; chart chosen by the thresholds.
PathState state_at(const Model& model, Vec2 point, const SimConfig& config);
/// State at tube coordinates of boundary k.
PathState state_on_tube(const Model& model, int k, double theta, double z, const SimConfig& config, Cell cell = {});

enum class TargetKind { Level, Surface, Curve };

struct Target {
  TargetKind kind = TargetKind::Surface;
  int k = 0;
  Cell cell{};
  /// Surface targets: any cell matches (optionally excluding `cell`).
  bool any_cell = false;
  bool exclude_cell = false;
  /// Curve targets: distance from surface k.
  double distance = 0.0;
  const LevelSet* level = nullptr;

  static Target level_set(const LevelSet& l) {
    Target t;
    t.kind = TargetKind::Level;
    t.k = l.boundary();
    t.cell = l.cell();
    t.level = &l;
    return t;
  }
  static Target surface(int k, Cell cell = {}) {
    Target t;
    t.kind = TargetKind::Surface;
    t.k = k;
    t.cell = cell;
    return t;
  }
  static Target any_other_surface(int k, Cell cell) {
    Target t = surface(k, cell);
    t.any_cell = true;
    t.exclude_cell = true;
    return t;
  }
  static Target curve(int k, double distance, Cell cell = {}) {
    Target t;
    t.kind = TargetKind::Curve;
    t.k = k;
    t.cell = cell;
    t.distance = distance;
    return t;
  }
};

enum class StopReason { HitTarget = 0, Absorbed = 1, TimeBudget = 2, EndTime = 3 };

const char* to_string(StopReason reason);

struct PathOutcome {
  StopReason reason = StopReason::EndTime;
  int target = -1;  // index into the target list
  PathState terminal;
  double time = 0.0;
  std::array<std::uint64_t, 4> steps{};  // per chart
  std::uint64_t chart_switches = 0;
};

/// Called once per step with the state at the start of the step and the step length.
using StepObserver = std::function<void(const PathState&, double)>;

class Simulator {
 public:
  Simulator(const Model& model, SimConfig config);

  const Model& model() const { return *model_; }
  const SimConfig& config() const { return config_; }

  /// One Euler step in the active chart, reflecting at one-sided boundaries.
  void step(PathState& state, PathRng& rng) const;

  /// Runs until a target is crossed, `horizon` is reached (EndTime) or the time
  /// budget is exhausted (TimeBudget). Surfaces that are not targets reflect.
  PathOutcome first_hit(PathState start, const std::vector<Target>& targets, PathRng& rng,
                        double horizon = -1.0, const StepObserver* observer = nullptr) const;

  /// Reflected process up to time T.
  PathOutcome run_reflected(PathState start, double T, PathRng& rng, const StepObserver* observer = nullptr) const;

  /// Time step used in a chart.
  double chart_dt(Chart c) const;
  /// Drift and covariance (2 x diffusion) in the chart coordinates of the state.
  void chart_coefficients(const PathState& s, Vec2& drift, Mat2& cov) const;

 private:
  struct Coords {
    double x0, x1;
  };
  Coords to_chart(const PathState& s) const;
  PathState from_chart(const PathState& ref, Coords c) const;
  void assign_chart(PathState& s) const;
  void settle(PathState& s) const;
  double functional(const Target& tg, const PathState& s, double ref_sign) const;
  /// Gap to the target and its gradient in chart coordinates, linear in the chart.
  bool bridge_gap(const Target& tg, const PathState& s, double ref_sign, double& gap, double& g0, double& g1) const;
  bool in_target(const Target& tg, const PathState& s) const;
  void project(const Target& tg, PathState& s) const;
  bool reflect(PathState& s) const;

  const Model* model_;
  SimConfig config_;
};

}  // namespace degenflow
