#include "degenflow/metastability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/LU>

#include "degenflow/error.hpp"
#include "degenflow/parallel.hpp"

namespace degenflow {

namespace {

std::uint64_t step_total(const PathOutcome& o) { return std::accumulate(o.steps.begin(), o.steps.end(), 0ULL); }

void require_boundary(const Model& model, int k) {
  if (k < 0 || k >= model.boundary_count()) throw Error(ErrorCode::InvalidArgument, "boundary index out of range");
}

void require_paths(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "number of paths must be positive");
}

Target surface_any_cell(int k) {
  Target t = Target::surface(k);
  t.any_cell = true;
  return t;
}

std::string format_power(double g) {
  std::ostringstream os;
  os.precision(6);
  os << "eps^" << -g;
  return os.str();
}

}  // namespace

CircleSampler::CircleSampler(const std::vector<double>& density) {
  if (density.empty()) throw Error(ErrorCode::InvalidArgument, "empty density");
  const std::size_t n = density.size();
  cdf_.assign(n + 1, 0.0);
  // Piecewise-linear density between grid points, periodic.
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::max(0.0, density[i]);
    const double b = std::max(0.0, density[(i + 1) % n]);
    cdf_[i + 1] = cdf_[i] + 0.5 * (a + b);
  }
  if (!(cdf_.back() > 0.0)) throw Error(ErrorCode::InvalidArgument, "density has no mass");
  for (auto& c : cdf_) c /= cdf_.back();
}

double CircleSampler::operator()(PathRng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - cdf_.begin(), 1) - 1, cdf_.size() - 2);
  const double w = cdf_[i + 1] - cdf_[i];
  const double frac = w > 0.0 ? (u - cdf_[i]) / w : 0.5;
  const double h = kTwoPi / static_cast<double>(cdf_.size() - 1);
  return wrap_angle((static_cast<double>(i) + frac) * h);
}

ExitProbEstimate estimate_exit_prob(const Model& model, const SimConfig& cfg, int k, const SpectralSolution& sol,
                                    double zeta, double kappa, std::uint64_t n, const RunOptions& opt) {
  require_boundary(model, k);
  require_paths(n);
  if (!(zeta > 0.0 && zeta <= kappa)) throw Error(ErrorCode::InvalidArgument, "need 0 < zeta <= kappa");
  const LevelSet start = gamma_level_set(model, k, zeta, sol);
  const LevelSet level = gamma_level_set(model, k, kappa, sol);
  const Simulator sim(model, cfg);
  const CircleSampler sampler(sol.pi);
  const std::vector<Target> targets{Target::surface(k), Target::level_set(level)};

  std::vector<int> result(n);
  std::vector<std::uint64_t> steps(n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    PathRng rng = derive_path_rng(opt.seed, i);
    const double theta = sampler(rng);
    const PathState s = state_on_tube(model, k, theta, start.z_at(theta), cfg);
    const auto out = sim.first_hit(s, targets, rng);
    result[i] = out.reason == StopReason::TimeBudget ? -1 : out.target;
    steps[i] = step_total(out);
  });

  ExitProbEstimate est;
  std::uint64_t hits_level = 0, hits_surface = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (result[i] < 0) ++est.budget_exhausted;
    else if (result[i] == 1) ++hits_level;
    else ++hits_surface;
    est.total_steps += steps[i];
  }
  const std::uint64_t trials = n - est.budget_exhausted;
  est.to_level = wilson_interval(hits_level, trials);
  est.to_surface = wilson_interval(hits_surface, trials);
  return est;
}

ExitTimeEstimate estimate_exit_time(const Model& model, const SimConfig& cfg, int k, const SpectralSolution& sol,
                                    double kappa, std::uint64_t n, const RunOptions& opt) {
  require_boundary(model, k);
  require_paths(n);
  const LevelSet level = gamma_level_set(model, k, kappa, sol);
  const Simulator sim(model, cfg);
  const CircleSampler sampler(sol.pi);
  const std::vector<Target> targets{Target::level_set(level)};

  std::vector<double> times(n);
  std::vector<char> exhausted(n, 0);
  std::vector<std::uint64_t> steps(n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    PathRng rng = derive_path_rng(opt.seed, i);
    const double theta = sampler(rng);
    const PathState s = state_on_tube(model, k, theta, 0.0, cfg);
    const auto out = sim.first_hit(s, targets, rng);
    times[i] = out.time;
    exhausted[i] = out.reason == StopReason::TimeBudget;
    steps[i] = step_total(out);
  });

  ExitTimeEstimate est;
  std::vector<double> kept;
  kept.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    est.total_steps += steps[i];
    if (exhausted[i]) ++est.budget_exhausted;
    else kept.push_back(times[i]);
  }
  est.unreliable = static_cast<double>(est.budget_exhausted) > 0.01 * static_cast<double>(n);
  if (kept.empty()) return est;
  est.time = summarize(kept);
  double m2 = 0.0;
  for (double t : kept) m2 += t * t;
  est.second_moment = m2 / static_cast<double>(kept.size());
  est.q10 = quantile(kept, 0.1);
  est.q50 = quantile(kept, 0.5);
  est.q90 = quantile(kept, 0.9);
  return est;
}

HittingMeasureEstimate estimate_hitting_measure(const Model& model, const SimConfig& cfg, int k,
                                                const SpectralSolution& sol, double kappa, HitStart start,
                                                std::uint64_t n, int bins, const RunOptions& opt,
                                                std::optional<double> start_theta) {
  require_boundary(model, k);
  require_paths(n);
  if (start == HitStart::LevelSet && !(cfg.eps > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "absorption at the surface needs eps > 0");
  }
  const LevelSet level = gamma_level_set(model, k, kappa, sol);
  const Simulator sim(model, cfg);
  const CircleSampler sampler(sol.pi);
  const std::vector<Target> targets{start == HitStart::LevelSet ? Target::surface(k) : Target::level_set(level)};

  std::vector<double> angle(n);
  std::vector<char> exhausted(n, 0);
  std::vector<std::uint64_t> steps(n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    PathRng rng = derive_path_rng(opt.seed, i);
    const double theta = start_theta ? *start_theta : sampler(rng);
    const double z = start == HitStart::LevelSet ? level.z_at(theta) : 0.0;
    const PathState s = state_on_tube(model, k, theta, z, cfg);
    const auto out = sim.first_hit(s, targets, rng);
    exhausted[i] = out.reason == StopReason::TimeBudget;
    angle[i] = out.terminal.theta;
    steps[i] = step_total(out);
  });

  HittingMeasureEstimate est;
  MeasureAccumulator acc(BinLayout::circle(bins));
  for (std::size_t i = 0; i < n; ++i) {
    est.total_steps += steps[i];
    if (exhausted[i]) ++est.budget_exhausted;
    else acc.add_boundary(0, angle[i]);
  }
  est.measure = acc.finish();
  return est;
}

TransitionEstimate estimate_transition_kernel(const Model& model, const SimConfig& cfg,
                                              const std::vector<SpectralSolution>& sols, std::uint64_t n_per_row,
                                              const RunOptions& opt, std::optional<double> start_theta) {
  const int m = model.boundary_count();
  if (m < 2) {
    throw Error(ErrorCode::InvalidArgument, "transition kernel needs at least two components");
  }
  if (!(cfg.eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "transition kernel needs eps > 0");
  if (static_cast<int>(sols.size()) != m) throw Error(ErrorCode::InvalidArgument, "one spectral solution per boundary");
  require_paths(n_per_row);
  const Simulator sim(model, cfg);

  TransitionEstimate est;
  est.eps = cfg.eps;
  est.q = Eigen::MatrixXd::Zero(m, m);
  est.lo = Eigen::MatrixXd::Zero(m, m);
  est.hi = Eigen::MatrixXd::Zero(m, m);
  est.row_counts.assign(m, 0);
  for (int i = 0; i < m; ++i) {
    std::vector<Target> targets;
    std::vector<int> target_boundary;
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      targets.push_back(surface_any_cell(j));
      target_boundary.push_back(j);
    }
    const CircleSampler sampler(sols[i].pi);
    std::vector<int> dest(n_per_row, -1);
    parallel_for(n_per_row, opt.threads, [&](std::size_t p) {
      PathRng rng = derive_path_rng(hash_combine(opt.seed, static_cast<std::uint64_t>(i)), p);
      const double theta = start_theta ? *start_theta : sampler(rng);
      const PathState s = state_on_tube(model, i, theta, 0.0, cfg);
      const auto out = sim.first_hit(s, targets, rng);
      if (out.reason == StopReason::Absorbed) dest[p] = target_boundary[out.target];
    });
    std::vector<std::uint64_t> counts(m, 0);
    for (int d : dest) {
      if (d < 0) ++est.budget_exhausted;
      else ++counts[d];
    }
    const std::uint64_t row = std::accumulate(counts.begin(), counts.end(), 0ULL);
    est.row_counts[i] = row;
    for (int j = 0; j < m; ++j) {
      if (j == i || row == 0) continue;
      const auto w = wilson_interval(counts[j], row);
      est.q(i, j) = w.estimate;
      est.lo(i, j) = w.lo;
      est.hi(i, j) = w.hi;
    }
  }
  return est;
}

PEstimate estimate_p(const Model& model, const SimConfig& cfg, const std::vector<SpectralSolution>& sols, Vec2 x,
                     double kappa, std::uint64_t n, const RunOptions& opt, double commit) {
  const int m = model.boundary_count();
  if (static_cast<int>(sols.size()) != m) throw Error(ErrorCode::InvalidArgument, "one spectral solution per boundary");
  if (!(commit > 0.0 && commit < 1.0)) throw Error(ErrorCode::InvalidArgument, "commitment factor must lie in (0, 1)");
  require_paths(n);
  std::vector<int> attracting;
  for (int k = 0; k < m; ++k) {
    if (sols[k].gamma > 0.0) attracting.push_back(k);
  }
  if (attracting.empty()) throw Error(ErrorCode::InvalidArgument, "no attracting component");

  PEstimate est;
  est.p.assign(m, wilson_interval(0, n));
  if (attracting.size() == 1) {
    est.p[attracting[0]] = wilson_interval(n, n);
    return est;
  }

  SimConfig c0 = cfg;
  c0.eps = 0.0;
  const Simulator sim(model, c0);
  // phi z^gamma <= commit kappa^gamma  <=>  level set at commit^(1/gamma) kappa.
  std::vector<LevelSet> levels;
  levels.reserve(attracting.size());
  for (int k : attracting) levels.push_back(gamma_level_set(model, k, std::pow(commit, 1.0 / sols[k].gamma) * kappa, sols[k]));
  std::vector<Target> targets;
  for (const auto& l : levels) {
    Target t = Target::level_set(l);
    t.any_cell = true;
    targets.push_back(t);
  }
  const PathState start = state_at(model, x, c0);

  std::vector<int> dest(n, -1);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    PathRng rng = derive_path_rng(opt.seed, i);
    const auto out = sim.first_hit(start, targets, rng);
    if (out.reason == StopReason::HitTarget) dest[i] = attracting[out.target];
  });
  std::vector<std::uint64_t> counts(m, 0);
  for (int d : dest) {
    if (d < 0) ++est.budget_exhausted;
    else ++counts[d];
  }
  const std::uint64_t trials = n - est.budget_exhausted;
  for (int k = 0; k < m; ++k) est.p[k] = wilson_interval(counts[k], trials);
  return est;
}

Eigen::VectorXd chain_absorption(const EmbeddedChain& chain, int l) {
  const int mbar = static_cast<int>(chain.q.rows());
  if (chain.q.cols() != mbar || chain.p.size() != mbar) throw Error(ErrorCode::InvalidArgument, "chain dimensions differ");
  if (l < 1 || l > mbar) throw Error(ErrorCode::InvalidArgument, "l must lie in [1, mbar]");
  Eigen::VectorXd out = chain.p.head(l);
  const int t = mbar - l;
  if (t == 0) return out;

  // Every transient state must reach {1..l}.
  std::vector<char> reach(mbar, 0);
  for (int i = 0; i < l; ++i) reach[i] = 1;
  for (bool changed = true; changed;) {
    changed = false;
    for (int i = l; i < mbar; ++i) {
      if (reach[i]) continue;
      for (int j = 0; j < mbar; ++j) {
        if (reach[j] && chain.q(i, j) > 0.0) {
          reach[i] = 1;
          changed = true;
          break;
        }
      }
    }
  }
  for (int i = l; i < mbar; ++i) {
    if (!reach[i]) {
      throw Error(ErrorCode::SingularTransientBlock, "state " + std::to_string(i + 1) + " cannot reach {1.." +
                                                         std::to_string(l) + "}");
    }
  }
  const Eigen::MatrixXd qtt = chain.q.block(l, l, t, t);
  const Eigen::MatrixXd qta = chain.q.block(l, 0, t, l);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(t, t) - qtt;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularTransientBlock, "I - q_TT is singular");
  const Eigen::MatrixXd h = lu.solve(qta);
  out += h.transpose() * chain.p.tail(t);
  return out;
}

MuEstimate estimate_mu(const Model& model, const SimConfig& cfg, const std::vector<SpectralSolution>& sols, Vec2 x,
                       const MuOptions& mo, const RunOptions& opt) {
  for (std::size_t k = 0; k < sols.size(); ++k) {
    if (!(sols[k].gamma < 0.0)) {
      throw Error(ErrorCode::NotAllRepelling, "component " + std::to_string(k) + " has gamma = " +
                                                  std::to_string(sols[k].gamma));
    }
  }
  if (!(mo.T > mo.burn_in && mo.burn_in >= 0.0)) throw Error(ErrorCode::InvalidArgument, "need 0 <= burn_in < T");
  require_paths(mo.paths);
  SimConfig c0 = cfg;
  c0.eps = 0.0;
  const Simulator sim(model, c0);
  const BinLayout layout = BinLayout::interior(model.box_lo(), model.box_hi(), mo.bins, mo.bins);
  const PathState start = state_at(model, x, c0);

  MuEstimate est;
  std::vector<MeasureAccumulator> occ(mo.paths, MeasureAccumulator(layout));
  std::vector<char> exhausted(mo.paths, 0);
  parallel_for(mo.paths, opt.threads, [&](std::size_t i) {
    PathRng rng = derive_path_rng(opt.seed, i);
    auto& acc = occ[i];
    const double burn = mo.burn_in;
    const StepObserver obs = [&](const PathState& s, double dt) {
      if (s.t >= burn) acc.add_interior(ambient(model, s), dt);
    };
    const auto out = sim.run_reflected(start, mo.T, rng, &obs);
    exhausted[i] = out.reason == StopReason::TimeBudget;
  });
  MeasureAccumulator total(layout);
  for (std::size_t i = 0; i < mo.paths; ++i) {
    total.merge(occ[i]);
    est.budget_exhausted += exhausted[i];
  }
  est.occupation = total.finish();

  if (mo.renewal_paths > 0) {
    if (!(mo.curve_f > 0.0 && mo.curve_g > 0.0 && mo.curve_f != mo.curve_g)) {
      throw Error(ErrorCode::InvalidArgument, "renewal curves need distinct positive distances");
    }
    const std::vector<Target> to_g{Target::curve(0, mo.curve_g)};
    const std::vector<Target> to_f{Target::curve(0, mo.curve_f)};
    std::vector<MeasureAccumulator> ren(mo.renewal_paths, MeasureAccumulator(layout));
    std::vector<double> cycle_time(mo.renewal_paths, 0.0);
    std::vector<int> cycles(mo.renewal_paths, 0);
    parallel_for(mo.renewal_paths, opt.threads, [&](std::size_t i) {
      PathRng rng = derive_path_rng(hash_combine(opt.seed, hash_label("renewal")), i);
      MeasureAccumulator cycle(layout);
      const StepObserver obs = [&](const PathState& s, double dt) { cycle.add_interior(ambient(model, s), dt); };
      auto out = sim.first_hit(start, to_g, rng);
      if (out.reason == StopReason::TimeBudget) return;
      PathState s = out.terminal;
      // The first cycle is discarded.
      for (int c = 0; c <= mo.cycles_per_path; ++c) {
        cycle = MeasureAccumulator(layout);
        const double t0 = s.t;
        out = sim.first_hit(s, to_f, rng, -1.0, &obs);
        if (out.reason == StopReason::TimeBudget) return;
        out = sim.first_hit(out.terminal, to_g, rng, -1.0, &obs);
        if (out.reason == StopReason::TimeBudget) return;
        s = out.terminal;
        if (c == 0) continue;
        ren[i].merge(cycle);
        cycle_time[i] += s.t - t0;
        ++cycles[i];
      }
    });
    MeasureAccumulator rt(layout);
    double time_sum = 0.0;
    long total_cycles = 0;
    for (std::size_t i = 0; i < mo.renewal_paths; ++i) {
      rt.merge(ren[i]);
      time_sum += cycle_time[i];
      total_cycles += cycles[i];
    }
    if (total_cycles > 0) {
      est.renewal = rt.finish();
      est.mean_cycle = time_sum / static_cast<double>(total_cycles);
    }
  }
  return est;
}

MetastableProfile predict_metastable(const ProfileInputs& in, ProcessMode mode, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw Error(ErrorCode::InvalidArgument, "eps must lie in (0, 1)");
  const int m = static_cast<int>(in.gamma.size());
  if (m == 0) throw Error(ErrorCode::InvalidArgument, "no components");
  MetastableProfile prof;
  prof.mode = mode;
  prof.eps = eps;
  prof.order.resize(m);
  std::iota(prof.order.begin(), prof.order.end(), 0);
  std::stable_sort(prof.order.begin(), prof.order.end(), [&](int a, int b) { return in.gamma[a] > in.gamma[b]; });
  for (int k : prof.order) prof.mbar += in.gamma[k] > 0.0;
  const auto g = [&](int l) { return in.gamma[prof.order[l - 1]]; };  // 1-based, decreasing
  const double inf = std::numeric_limits<double>::infinity();
  const double lne = std::abs(std::log(eps));

  auto window = [&](std::string desc, double lo, double hi) {
    ProfileWindow w;
    w.descriptor = std::move(desc);
    w.lo = lo;
    w.hi = hi;
    w.t_rep = std::isinf(hi) ? 10.0 * lo : std::sqrt(lo * hi);
    w.pi_weight.assign(m, 0.0);
    w.nu_weight.assign(m, 0.0);
    return w;
  };
  auto pvec = [&]() -> Eigen::VectorXd {
    Eigen::VectorXd p(prof.mbar);
    if (prof.mbar == 1) {
      p(0) = 1.0;
      return p;
    }
    if (!in.p) throw Error(ErrorCode::MissingIngredient, "p^x");
    double s = 0.0;
    for (int l = 0; l < prof.mbar; ++l) s += p(l) = std::max(0.0, (*in.p)[prof.order[l]]);
    if (!(s > 0.0)) throw Error(ErrorCode::MissingIngredient, "p^x has no mass on attracting components");
    return p / s;
  };

  const bool attracting = prof.mbar >= 1;
  if (mode == ProcessMode::Reflected && attracting) {
    for (int l = 1; l < prof.mbar; ++l) {
      if (std::abs(g(l) - g(l + 1)) <= 1e-9) {
        throw Error(ErrorCode::MissingIngredient, "tied exponents gamma_" + std::to_string(l) + " = gamma_" +
                                                      std::to_string(l + 1));
      }
    }
    const Eigen::VectorXd p = pvec();
    EmbeddedChain chain;
    chain.p = p;
    const bool need_q = prof.mbar >= 3;
    if (need_q) {
      if (!in.q) throw Error(ErrorCode::MissingIngredient, "q");
      chain.q.resize(prof.mbar, prof.mbar);
      for (int a = 0; a < prof.mbar; ++a) {
        double s = 0.0;
        for (int b = 0; b < prof.mbar; ++b) s += chain.q(a, b) = a == b ? 0.0 : (*in.q)(prof.order[a], prof.order[b]);
        if (!(s > 0.0)) throw Error(ErrorCode::MissingIngredient, "q row " + std::to_string(a + 1) + " is empty");
        chain.q.row(a) /= s;
      }
    }
    const int mb = prof.mbar;
    auto first = window("(1, " + format_power(g(mb)) + ")", 1.0, std::pow(eps, -g(mb)));
    for (int a = 0; a < mb; ++a) first.pi_weight[prof.order[a]] = p(a);
    prof.windows.push_back(first);
    for (int l = mb - 1; l >= 1; --l) {
      auto w = window("(" + format_power(g(l + 1)) + ", " + format_power(g(l)) + ")", std::pow(eps, -g(l + 1)),
                      std::pow(eps, -g(l)));
      Eigen::VectorXd pl(l);
      if (l == 1) pl(0) = 1.0;
      else pl = chain_absorption(chain, l);
      for (int a = 0; a < l; ++a) w.pi_weight[prof.order[a]] = pl(a);
      prof.windows.push_back(w);
    }
    auto last = window("(" + format_power(g(1)) + ", inf)", std::pow(eps, -g(1)), inf);
    last.pi_weight[prof.order[0]] = 1.0;
    prof.windows.push_back(last);
  } else if (mode == ProcessMode::Reflected) {
    if (!in.have_mu) throw Error(ErrorCode::MissingIngredient, "mu");
    auto w = window("(1, inf)", 1.0, inf);
    w.mu_weight = 1.0;
    prof.windows.push_back(w);
  } else if (attracting) {
    const Eigen::VectorXd p = pvec();
    if (!in.have_nu) throw Error(ErrorCode::MissingIngredient, "nu");
    auto a = window("(1, |ln eps|)", 1.0, lne);
    auto b = window("(|ln eps|, inf)", lne, inf);
    for (int l = 0; l < prof.mbar; ++l) {
      a.pi_weight[prof.order[l]] = p(l);
      b.nu_weight[prof.order[l]] = p(l);
    }
    prof.windows.push_back(a);
    prof.windows.push_back(b);
  } else {
    if (!in.have_mu) throw Error(ErrorCode::MissingIngredient, "mu");
    if (!in.have_nu) throw Error(ErrorCode::MissingIngredient, "nu");
    // gamma_1 < 0 here, so eps^gamma_1 is large.
    const double edge = std::pow(eps, g(1));
    std::ostringstream os;
    os.precision(6);
    os << "eps^" << g(1);
    auto a = window("(1, " + os.str() + ")", 1.0, edge);
    a.mu_weight = 1.0;
    auto b = window("(" + os.str() + ", inf)", edge, inf);
    b.nu_weight[prof.order[0]] = 1.0;
    prof.windows.push_back(a);
    prof.windows.push_back(b);
  }
  return prof;
}

BinnedMeasure profile_measure(const ProfileWindow& w, const BinLayout& layout, const std::vector<BinnedMeasure>& pis,
                              const std::vector<BinnedMeasure>& nus, const BinnedMeasure* mu) {
  std::vector<std::pair<double, BinnedMeasure>> parts;
  const int m = static_cast<int>(w.pi_weight.size());
  if (layout.circles != m) throw Error(ErrorCode::BinMismatch, "layout circle count differs from the component count");
  for (int k = 0; k < m; ++k) {
    BinnedMeasure circle = uniform_circle(layout.angular);
    double weight = 0.0;
    std::vector<double> acc(layout.angular, 0.0);
    auto add = [&](double wk, const std::vector<BinnedMeasure>& laws, const char* name) {
      if (wk <= 0.0) return;
      if (static_cast<int>(laws.size()) <= k) throw Error(ErrorCode::MissingIngredient, std::string(name) + "_" + std::to_string(k));
      const auto& law = laws[k];
      if (!(law.layout() == BinLayout::circle(layout.angular))) throw Error(ErrorCode::BinMismatch, name);
      for (int b = 0; b < layout.angular; ++b) acc[b] += wk * law.mass()[b];
      weight += wk;
    };
    add(w.pi_weight[k], pis, "pi");
    add(w.nu_weight[k], nus, "nu");
    if (weight > 0.0) circle = BinnedMeasure::from_weights(BinLayout::circle(layout.angular), acc, 0);
    parts.emplace_back(weight, circle);
  }
  if (w.mu_weight > 0.0 && mu == nullptr) throw Error(ErrorCode::MissingIngredient, "mu");
  return mixture(layout, parts, w.mu_weight, w.mu_weight > 0.0 ? mu : nullptr);
}

MetastableSample simulate_metastable(const Model& model, const SimConfig& cfg, Vec2 x, double t, std::uint64_t n,
                                     ProcessMode mode, const BinLayout& layout, double capture,
                                     const RunOptions& opt) {
  require_paths(n);
  if (!(t >= 0.0)) throw Error(ErrorCode::InvalidArgument, "time must be nonnegative");
  if (layout.circles != model.boundary_count()) throw Error(ErrorCode::BinMismatch, "layout circle count");
  const Simulator sim(model, cfg);
  std::vector<Target> targets;
  if (mode == ProcessMode::Stopped) {
    for (int k = 0; k < model.boundary_count(); ++k) targets.push_back(surface_any_cell(k));
  }
  const PathState start = state_at(model, x, cfg);

  struct Result {
    std::size_t bin = 0;
    bool absorbed = false;
    bool exhausted = false;
    std::uint64_t steps = 0;
  };
  std::vector<Result> res(n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    PathRng rng = derive_path_rng(opt.seed, i);
    const auto out = sim.first_hit(start, targets, rng, t);
    Result& r = res[i];
    r.steps = step_total(out);
    r.exhausted = out.reason == StopReason::TimeBudget;
    r.absorbed = out.reason == StopReason::Absorbed;
    const PathState& s = out.terminal;
    if (r.absorbed || (s.in_tube && std::abs(s.z) <= capture)) r.bin = layout.boundary_bin(s.k, s.theta);
    else r.bin = layout.interior_bin(ambient(model, s));
  });

  MetastableSample out;
  MeasureAccumulator acc(layout);
  for (const auto& r : res) {
    out.total_steps += r.steps;
    out.absorbed += r.absorbed;
    if (r.exhausted) {
      ++out.budget_exhausted;
      continue;
    }
    acc.add_bin(r.bin);
  }
  out.measure = acc.finish();
  return out;
}

}  // namespace degenflow
