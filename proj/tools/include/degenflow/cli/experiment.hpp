#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "degenflow/cli/config.hpp"
#include "degenflow/cli/output.hpp"
#include "degenflow/homogenization.hpp"

namespace degenflow::cli {

struct RunSettings {
  std::string out_dir;  // empty: plan.out_dir
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 1 error, 2 budget exhausted on more than 1% of paths
  std::string out_dir;
  std::uint64_t total_paths = 0;
  std::uint64_t budget_exhausted = 0;
  std::string error;
  nlohmann::json summary;
};

/// Writes results.csv, summary.json and spectral_<k>.json into the output
/// directory. Never throws for failures inside the experiment; they are
/// recorded in summary.json and the exit code.
RunResult run_experiment(const ExperimentPlan& plan, const RunSettings& settings);

/// Version string fixed at configure time.
const char* version_string();

nlohmann::json spectral_to_json(const SpectralSolution& sol);
nlohmann::json walk_to_json(const RenewalWalkModel& walk);
/// Throws InvalidArgument on malformed input.
RenewalWalkModel walk_from_json(const nlohmann::json& j);
nlohmann::json effective_to_json(const EffectiveCoefficients& eff);

/// Stable per-grid-point stream seed from the master seed and a label.
std::uint64_t grid_seed(std::uint64_t master, const std::string& label);

}  // namespace degenflow::cli
