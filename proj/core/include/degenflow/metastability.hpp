#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "degenflow/measure.hpp"
#include "degenflow/sde.hpp"
#include "degenflow/spectral.hpp"
#include "degenflow/stats.hpp"

namespace degenflow {

struct RunOptions {
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Samples angles from a grid density on the circle by inverse CDF.
class CircleSampler {
 public:
  explicit CircleSampler(const std::vector<double>& density);
  double operator()(PathRng& rng) const;

 private:
  std::vector<double> cdf_;
};

struct ExitProbEstimate {
  Proportion to_level;    // paths reaching Gamma_kappa first
  Proportion to_surface;  // paths reaching S_k first
  std::uint64_t budget_exhausted = 0;
  std::uint64_t total_steps = 0;
};

/// Paths start on Gamma_zeta (angle drawn from pi_k) and stop at S_k or Gamma_kappa.
ExitProbEstimate estimate_exit_prob(const Model& model, const SimConfig& cfg, int k, const SpectralSolution& sol,
                                    double zeta, double kappa, std::uint64_t n, const RunOptions& opt);

struct ExitTimeEstimate {
  SampleSummary time;
  double q10 = 0.0, q50 = 0.0, q90 = 0.0;
  double second_moment = 0.0;
  std::uint64_t budget_exhausted = 0;
  bool unreliable = false;  // more than 1% of paths hit the budget
  std::uint64_t total_steps = 0;
};

/// Paths start on S_k (angle drawn from pi_k) and stop at Gamma_kappa; S_k reflects.
ExitTimeEstimate estimate_exit_time(const Model& model, const SimConfig& cfg, int k, const SpectralSolution& sol,
                                    double kappa, std::uint64_t n, const RunOptions& opt);

enum class HitStart { LevelSet, Surface };

struct HittingMeasureEstimate {
  BinnedMeasure measure;
  std::uint64_t budget_exhausted = 0;
  std::uint64_t total_steps = 0;
};

/// LevelSet start: from Gamma_kappa to S_k (nu_k). Surface start: from S_k to
/// Gamma_kappa (the measure on Gamma_kappa, binned by angle). A fixed start angle
/// replaces sampling from pi_k.
HittingMeasureEstimate estimate_hitting_measure(const Model& model, const SimConfig& cfg, int k,
                                                const SpectralSolution& sol, double kappa, HitStart start,
                                                std::uint64_t n, int bins, const RunOptions& opt,
                                                std::optional<double> start_theta = std::nullopt);

struct TransitionEstimate {
  Eigen::MatrixXd q, lo, hi;
  std::vector<std::uint64_t> row_counts;
  std::uint64_t budget_exhausted = 0;
  double eps = 0.0;
};

/// Row i: start on S_i with angle from pi_i, stop at the first other component.
TransitionEstimate estimate_transition_kernel(const Model& model, const SimConfig& cfg,
                                              const std::vector<SpectralSolution>& sols, std::uint64_t n_per_row,
                                              const RunOptions& opt, std::optional<double> start_theta = std::nullopt);

struct PEstimate {
  std::vector<Proportion> p;  // indexed by boundary; zero for repelling components
  std::uint64_t budget_exhausted = 0;
};

/// Unperturbed process from x until phi_k z^gamma_k <= commit * kappa^gamma_k for
/// some attracting k.
PEstimate estimate_p(const Model& model, const SimConfig& cfg, const std::vector<SpectralSolution>& sols, Vec2 x,
                     double kappa, std::uint64_t n, const RunOptions& opt, double commit = 1e-3);

struct EmbeddedChain {
  Eigen::MatrixXd q;  // stochastic matrix on attracting states, ordered by decreasing gamma
  Eigen::VectorXd p;  // initial distribution
};

/// Absorption law in {1..l} (1-based l) of the chain started from p.
Eigen::VectorXd chain_absorption(const EmbeddedChain& chain, int l);

struct MuOptions {
  double T = 100.0;        // per path
  double burn_in = 10.0;
  std::uint64_t paths = 1;
  // Renewal estimator: cycles between curves at these distances from boundary 0.
  double curve_f = 0.0;
  double curve_g = 0.0;
  std::uint64_t renewal_paths = 0;
  int cycles_per_path = 10;
  int bins = 32;
};

struct MuEstimate {
  BinnedMeasure occupation;
  std::optional<BinnedMeasure> renewal;
  double mean_cycle = 0.0;
  std::uint64_t budget_exhausted = 0;
};

/// Invariant measure of the unperturbed process (all components repelling).
MuEstimate estimate_mu(const Model& model, const SimConfig& cfg, const std::vector<SpectralSolution>& sols, Vec2 x,
                       const MuOptions& mo, const RunOptions& opt);

enum class ProcessMode { Reflected, Stopped };

struct ProfileWindow {
  std::string descriptor;
  double lo = 1.0;
  double hi = 0.0;  // +inf for the last window
  double t_rep = 0.0;
  std::vector<double> pi_weight;  // per boundary
  std::vector<double> nu_weight;  // per boundary
  double mu_weight = 0.0;
};

struct MetastableProfile {
  ProcessMode mode = ProcessMode::Reflected;
  double eps = 0.0;
  std::vector<int> order;  // boundaries by decreasing gamma
  int mbar = 0;
  std::vector<ProfileWindow> windows;
};

struct ProfileInputs {
  std::vector<double> gamma;                 // per boundary
  std::optional<std::vector<double>> p;      // per boundary, attracting entries used
  std::optional<Eigen::MatrixXd> q;          // per-boundary indexing, attracting block used
  bool have_nu = false;
  bool have_mu = false;
};

MetastableProfile predict_metastable(const ProfileInputs& in, ProcessMode mode, double eps);

/// Predicted measure for a window on the combined layout.
BinnedMeasure profile_measure(const ProfileWindow& w, const BinLayout& layout, const std::vector<BinnedMeasure>& pis,
                              const std::vector<BinnedMeasure>& nus, const BinnedMeasure* mu);

struct MetastableSample {
  BinnedMeasure measure;
  std::uint64_t absorbed = 0;
  std::uint64_t budget_exhausted = 0;
  std::uint64_t total_steps = 0;
};

/// Law of X_t (reflected) or X_{t and tau} (stopped) on the combined layout.
/// Reflected: points within `capture` of a boundary go to its angular bins.
MetastableSample simulate_metastable(const Model& model, const SimConfig& cfg, Vec2 x, double t, std::uint64_t n,
                                     ProcessMode mode, const BinLayout& layout, double capture, const RunOptions& opt);

}  // namespace degenflow
