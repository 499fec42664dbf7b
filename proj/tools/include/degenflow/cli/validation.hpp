#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "degenflow/geometry.hpp"

namespace degenflow::cli {

enum class ValidationLevel { Fast, Full };

struct ValidationOptions {
  ValidationLevel level = ValidationLevel::Fast;
  std::uint64_t seed = 1;
  int threads = 1;
  /// Test hook: flips the sign of beta in the spectral closed-form check.
  bool inject_beta_sign_error = false;
  /// Restricts the run to these criterion ids (empty: all of the level).
  std::vector<int> only;
  /// Called after each criterion.
  std::function<void(const struct CriterionResult&)> on_result;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  bool skipped = false;
  std::string measured;
  std::string tolerance;
  double seconds = 0.0;
};

struct ValidationReport {
  std::vector<CriterionResult> criteria;
  bool all_passed() const;
};

/// Fast: criteria 1, 2 and 6. Full: 1 to 10.
ValidationReport validate_suite(const ValidationOptions& opt);

/// "PASS 3 <title>: <measured> | <tolerance> | 12.3 s"
std::string format_result(const CriterionResult& r);

/// Probability of reaching boundary 1 before boundary 2 for the unperturbed
/// height process of a rotation-invariant cylinder, from the scale function.
double cylinder_commitment(const Model& model, double y);

}  // namespace degenflow::cli
