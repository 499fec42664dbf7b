#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "degenflow/geometry.hpp"
#include "degenflow/metastability.hpp"
#include "degenflow/rng.hpp"
#include "degenflow/sde.hpp"
#include "degenflow/spectral.hpp"
#include "degenflow/stats.hpp"

namespace degenflow {

struct KernelEntry {
  Cell shift{};  // lattice offset of the destination surface
  int to = 0;    // destination surface type, 0-based
  double prob = 0.0;
};

/// Markov renewal walk on (cell, surface type). Times enter only through the
/// mean renewal time c_k of each type at the governing scale.
struct RenewalWalkModel {
  std::vector<std::vector<KernelEntry>> rows;  // one row per surface type
  std::vector<double> c;                       // mean renewal time constants, > 0
  std::vector<double> gamma;                   // exit exponents; empty for hand-built walks
  int radius = 3;                              // Chebyshev truncation radius in cells
  std::vector<double> tail;                    // row mass beyond the radius
  std::vector<std::uint64_t> row_counts;       // paths per row; empty for hand-built walks
  std::vector<ScalingFit> time_fits;           // log E sigma vs log eps, when >= 3 eps values
  std::uint64_t budget_exhausted = 0;

  int types() const { return static_cast<int>(rows.size()); }
  /// Throws InvalidArgument on malformed rows (negative mass, sums off by more than 1e-9).
  void validate() const;
};

struct RenewalBuildOptions {
  std::vector<double> eps;  // kernel taken from the smallest value
  std::uint64_t n = 1000;   // paths per row and eps
  int radius = 3;
  double max_tail = 1e-3;
  double start_theta = -1.0;  // < 0: start from the stationary law on the surface
};

/// Kernel and time constants from first-hit runs on the periodic plane.
/// Throws TruncationTooSmall, InvalidArgument.
RenewalWalkModel build_renewal_model(const Model& model, const SimConfig& cfg,
                                     const std::vector<SpectralSolution>& sols, const RenewalBuildOptions& bo,
                                     const RunOptions& opt);

struct EffectiveCoefficients {
  Vec2 a{};
  Mat2 B{};
  double gamma = 0.0;       // governing time scale exponent
  double mean_time = 0.0;   // sum pi_k c_k
  Mat2 step_covariance{};   // asymptotic covariance per renewal
  Eigen::VectorXd pi;       // stationary law of the type chain
  std::optional<Vec2> a_stderr;  // from row counts, when present
};

/// Stationary law of the type chain. Throws NonErgodicTypeChain.
Eigen::VectorXd type_stationary(const RenewalWalkModel& walk);

Vec2 effective_drift(const RenewalWalkModel& walk);
/// Throws NonErgodicTypeChain, PoissonSolveFailure.
EffectiveCoefficients effective_diffusion(const RenewalWalkModel& walk);

/// Rotation by a quarter turn of every shift.
RenewalWalkModel rotate_quarter(const RenewalWalkModel& walk);

struct WalkTrace {
  Vec2 displacement{};
  double time = 0.0;
  int type = 0;
};

/// Draws from a walk's rows with precomputed cumulative tables.
class WalkSampler {
 public:
  explicit WalkSampler(const RenewalWalkModel& walk);
  const KernelEntry& draw(int type, PathRng& rng) const;
  /// Runs `steps` renewals from `type`.
  WalkTrace run(int type, std::uint64_t steps, PathRng& rng) const;

 private:
  const RenewalWalkModel* walk_;
  std::vector<std::vector<double>> cdf_;
};

struct WalkEstimate {
  Vec2 a{};
  Vec2 a_stderr{};
  Mat2 B{};
  Mat2 B_stderr{};
  std::uint64_t steps = 0;
};

/// Batch-means estimate from one long walk.
WalkEstimate walk_batch_means(const RenewalWalkModel& walk, std::uint64_t steps, int batches, std::uint64_t seed);

struct EndpointTest {
  double ad_x = 0.0;
  double ad_y = 0.0;
  bool normal_x = false;
  bool normal_y = false;
  Vec2 mean_drift{};  // empirical mean displacement per unit time
  std::vector<Vec2> standardized;
};

/// Endpoints of `walks` independent walks of `steps` renewals, centered at the
/// empirical mean and scaled by sqrt(B T) per axis, tested against N(0, 1).
EndpointTest endpoint_normality(const RenewalWalkModel& walk, const EffectiveCoefficients& eff, std::uint64_t walks,
                                std::uint64_t steps, const RunOptions& opt);

struct SlowdownWindow {
  double horizon = 0.0;
  SampleSummary free_fraction;
  std::optional<double> renewal_fraction;  // 1 - trap sojourn / cycle, from completed sojourns
  std::uint64_t sojourns = 0;
};

struct SlowdownEstimate {
  std::vector<SlowdownWindow> windows;
  bool monotone = true;
  std::uint64_t budget_exhausted = 0;
};

/// Free-region occupation fractions up to each horizon from a start point in
/// the free region. Throws NotAllRepelling.
SlowdownEstimate slowdown_factors(const Model& model, const SimConfig& cfg, const std::vector<SpectralSolution>& sols,
                                  Vec2 x, const std::vector<double>& horizons, std::uint64_t n,
                                  const RunOptions& opt);

/// True outside every hole.
bool in_free_region(const Model& model, const PathState& s);

}  // namespace degenflow
