#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "degenflow/error.hpp"
#include "degenflow/geometry.hpp"
#include "degenflow/metastability.hpp"
#include "degenflow/sde.hpp"

namespace degenflow::cli {

enum class ExperimentKind { Spectral, ExitProb, ExitTime, HitMeasure, Transition, Metastable, Mu, Homogenize };

const char* to_string(ExperimentKind kind);
std::optional<ExperimentKind> experiment_kind_from_string(const std::string& name);

struct ModelDescription {
  GeometryKind kind = GeometryKind::Cylinder;
  InteriorSpec interior;
  std::vector<BoundarySpec> boundaries;

  Model build() const { return Model::build(kind, boundaries, interior); }
};

struct ExperimentPlan {
  std::string name;  // section suffix, empty for a bare [experiment]
  ExperimentKind kind = ExperimentKind::Spectral;
  ModelDescription model;
  std::uint64_t model_hash = 0;
  SimConfig sim;

  std::vector<double> eps;          // grid; defaults to {sim.eps}
  std::vector<double> kappa;        // grid
  std::vector<double> zeta_ratio;   // zeta / kappa grid (exitprob)
  std::vector<double> times;        // metastable
  std::uint64_t n = 256;            // paths per grid point
  int bins = 32;
  int spectral_n = 256;
  int boundary = 1;                 // 1-based
  HitStart start = HitStart::LevelSet;
  std::optional<Vec2> x;            // start point
  ProcessMode mode = ProcessMode::Reflected;
  double capture = 0.0;             // 0: half the tube width
  double T = 100.0;                 // mu
  double burn_in = 10.0;
  int radius = 3;                   // homogenize
  std::string kernel_file;          // homogenize: walk from JSON instead of simulation
  std::uint64_t walk_steps = 10'000'000;
  std::uint64_t walks = 200;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  bool dump_spectral = true;
};

struct ConfigIssue {
  ErrorCode code = ErrorCode::ValidationError;
  int line = 0;  // 0 when not tied to a line
  std::string key;
  std::string message;
};

/// Aggregates every issue found in one pass. code() is ParseError when any
/// issue is syntactic, ValidationError otherwise.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// One plan per experiment section ([experiment] or [experiment.NAME]); all share
/// the model block. Throws ConfigError.
std::vector<ExperimentPlan> parse_config(const std::string& text);
std::vector<ExperimentPlan> load_config(const std::string& path);

/// FNV-1a over a canonical rendering of the model block.
std::uint64_t model_hash(const ModelDescription& model);
std::string hex_hash(std::uint64_t h);

/// "%.17g"
std::string format_double(double v);

}  // namespace degenflow::cli
