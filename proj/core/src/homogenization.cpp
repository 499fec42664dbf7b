#include "degenflow/homogenization.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include <Eigen/LU>

#include "degenflow/error.hpp"
#include "degenflow/parallel.hpp"

namespace degenflow {

namespace {

Target surface_any_cell(int k) {
  Target t = Target::surface(k);
  t.any_cell = true;
  return t;
}

Eigen::MatrixXd type_matrix(const RenewalWalkModel& walk) {
  const int m = walk.types();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    for (const auto& e : walk.rows[k]) P(k, e.to) += e.prob;
  }
  return P;
}

bool irreducible(const Eigen::MatrixXd& P) {
  const int m = static_cast<int>(P.rows());
  for (int s = 0; s < m; ++s) {
    std::vector<bool> seen(m, false);
    std::vector<int> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < m; ++v) {
        if (P(u, v) > 0.0 && !seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
  }
  return true;
}

// Mean shift of each row.
std::vector<Vec2> row_means(const RenewalWalkModel& walk) {
  std::vector<Vec2> mk(walk.types());
  for (int k = 0; k < walk.types(); ++k) {
    for (const auto& e : walk.rows[k]) mk[k] = mk[k] + e.prob * Vec2{double(e.shift.i), double(e.shift.j)};
  }
  return mk;
}

Vec2 drift_from(const RenewalWalkModel& walk, const Eigen::VectorXd& pi, double& mu) {
  const auto mk = row_means(walk);
  Vec2 num{};
  mu = 0.0;
  for (int k = 0; k < walk.types(); ++k) {
    num = num + pi(k) * mk[k];
    mu += pi(k) * walk.c[k];
  }
  return (1.0 / mu) * num;
}

}  // namespace

void RenewalWalkModel::validate() const {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "walk has no surface types");
  if (c.size() != rows.size()) throw Error(ErrorCode::InvalidArgument, "one time constant per surface type");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (!(c[k] > 0.0)) throw Error(ErrorCode::InvalidArgument, "time constants must be positive");
    double sum = 0.0;
    for (const auto& e : rows[k]) {
      if (e.prob < 0.0) throw Error(ErrorCode::InvalidArgument, "negative kernel mass");
      if (e.to < 0 || e.to >= types()) throw Error(ErrorCode::InvalidArgument, "kernel destination out of range");
      sum += e.prob;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidArgument, "kernel row " + std::to_string(k + 1) + " does not sum to 1");
    }
  }
}

RenewalWalkModel build_renewal_model(const Model& model, const SimConfig& cfg,
                                     const std::vector<SpectralSolution>& sols, const RenewalBuildOptions& bo,
                                     const RunOptions& opt) {
  if (model.kind() != GeometryKind::PeriodicPlane) {
    throw Error(ErrorCode::InvalidArgument, "renewal walk needs the periodic plane");
  }
  const int m = model.boundary_count();
  if (static_cast<int>(sols.size()) != m) throw Error(ErrorCode::InvalidArgument, "one spectral solution per boundary");
  if (bo.eps.empty()) throw Error(ErrorCode::InvalidArgument, "empty eps list");
  if (bo.n == 0) throw Error(ErrorCode::InvalidArgument, "number of paths must be positive");
  if (bo.radius < 1) throw Error(ErrorCode::InvalidArgument, "truncation radius must be at least 1");
  for (double e : bo.eps) {
    if (!(e > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps values must be positive");
  }
  std::vector<double> eps = bo.eps;
  std::sort(eps.begin(), eps.end());

  RenewalWalkModel walk;
  walk.radius = bo.radius;
  walk.rows.resize(m);
  walk.c.assign(m, 0.0);
  walk.tail.assign(m, 0.0);
  walk.row_counts.assign(m, 0);
  for (const auto& s : sols) walk.gamma.push_back(s.gamma);

  struct Hit {
    bool ok = false;
    int to = 0;
    Cell shift{};
    double time = 0.0;
  };

  for (int k = 0; k < m; ++k) {
    std::vector<Target> targets;
    for (int j = 0; j < m; ++j) {
      targets.push_back(j == k ? Target::any_other_surface(k, Cell{}) : surface_any_cell(j));
    }
    const CircleSampler sampler(sols[k].pi);
    std::vector<std::pair<double, double>> times;
    std::vector<double> scaled;
    for (std::size_t ie = 0; ie < eps.size(); ++ie) {
      SimConfig c = cfg;
      c.eps = eps[ie];
      const Simulator sim(model, c);
      std::vector<Hit> hits(bo.n);
      const std::uint64_t row_seed =
          hash_combine(hash_combine(opt.seed, static_cast<std::uint64_t>(k)), static_cast<std::uint64_t>(ie));
      parallel_for(bo.n, opt.threads, [&](std::size_t p) {
        PathRng rng = derive_path_rng(row_seed, p);
        const double theta = bo.start_theta >= 0.0 ? bo.start_theta : sampler(rng);
        const auto out = sim.first_hit(state_on_tube(model, k, theta, 0.0, c), targets, rng);
        if (out.reason != StopReason::Absorbed) return;
        hits[p] = {true, out.target, out.terminal.cell, out.time};
      });

      std::vector<double> tau;
      std::uint64_t exhausted = 0;
      for (const auto& h : hits) {
        if (h.ok) tau.push_back(h.time);
        else ++exhausted;
      }
      walk.budget_exhausted += exhausted;
      if (tau.empty()) throw Error(ErrorCode::BudgetExhausted, "no renewal completed within the time budget");
      const double mean_tau = summarize(tau).mean;
      times.emplace_back(eps[ie], mean_tau);
      scaled.push_back(std::log(mean_tau * std::pow(eps[ie], sols[k].gamma)));

      if (ie != 0) continue;
      std::map<std::tuple<int, int, int>, std::uint64_t> counts;
      std::uint64_t outside = 0;
      for (const auto& h : hits) {
        if (!h.ok) continue;
        if (std::max(std::abs(h.shift.i), std::abs(h.shift.j)) > bo.radius) {
          ++outside;
          continue;
        }
        ++counts[{h.to, h.shift.i, h.shift.j}];
      }
      const std::uint64_t total = tau.size();
      walk.row_counts[k] = total;
      walk.tail[k] = static_cast<double>(outside) / static_cast<double>(total);
      if (walk.tail[k] > bo.max_tail) {
        throw Error(ErrorCode::TruncationTooSmall, "row " + std::to_string(k + 1) + " has tail mass " +
                                                       std::to_string(walk.tail[k]) + " beyond radius " +
                                                       std::to_string(bo.radius));
      }
      const double kept = static_cast<double>(total - outside);
      for (const auto& [key, n] : counts) {
        walk.rows[k].push_back({Cell{std::get<1>(key), std::get<2>(key)}, std::get<0>(key), n / kept});
      }
    }
    // Geometric mean of eps^gamma E sigma.
    walk.c[k] = std::exp(std::accumulate(scaled.begin(), scaled.end(), 0.0) / static_cast<double>(scaled.size()));
    if (times.size() >= 3) walk.time_fits.push_back(fit_scaling_exponent(times));
  }
  walk.validate();
  return walk;
}

Eigen::VectorXd type_stationary(const RenewalWalkModel& walk) {
  walk.validate();
  const Eigen::MatrixXd P = type_matrix(walk);
  if (!irreducible(P)) throw Error(ErrorCode::NonErgodicTypeChain, "surface-type chain is not irreducible");
  const int m = walk.types();
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(m, m);
  A.row(m - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(m - 1) = 1.0;
  Eigen::VectorXd pi = A.fullPivLu().solve(rhs);
  if (pi.minCoeff() < -1e-12 || !pi.allFinite()) {
    throw Error(ErrorCode::NonErgodicTypeChain, "stationary law is not a probability vector");
  }
  return pi.cwiseMax(0.0) / pi.cwiseMax(0.0).sum();
}

Vec2 effective_drift(const RenewalWalkModel& walk) {
  const Eigen::VectorXd pi = type_stationary(walk);
  double mu = 0.0;
  return drift_from(walk, pi, mu);
}

EffectiveCoefficients effective_diffusion(const RenewalWalkModel& walk) {
  EffectiveCoefficients eff;
  eff.pi = type_stationary(walk);
  const int m = walk.types();
  eff.a = drift_from(walk, eff.pi, eff.mean_time);
  if (!walk.gamma.empty()) eff.gamma = *std::max_element(walk.gamma.begin(), walk.gamma.end());

  const auto mk = row_means(walk);
  const Eigen::MatrixXd P = type_matrix(walk);
  Eigen::MatrixXd gbar(m, 2);
  for (int k = 0; k < m; ++k) {
    gbar(k, 0) = mk[k].x - eff.a.x * walk.c[k];
    gbar(k, 1) = mk[k].y - eff.a.y * walk.c[k];
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd M = I - P + Eigen::VectorXd::Ones(m) * eff.pi.transpose();
  const Eigen::MatrixXd h = M.fullPivLu().solve(gbar);
  const double res = ((I - P) * h - gbar).cwiseAbs().maxCoeff();
  const double orth = (eff.pi.transpose() * h).cwiseAbs().maxCoeff();
  if (!h.allFinite() || res > 1e-9 * (1.0 + gbar.cwiseAbs().maxCoeff()) || orth > 1e-9 * (1.0 + h.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::PoissonSolveFailure, "Poisson equation residual " + std::to_string(res));
  }

  Mat2 S;
  for (int k = 0; k < m; ++k) {
    for (const auto& e : walk.rows[k]) {
      const double gx = e.shift.i - eff.a.x * walk.c[k];
      const double gy = e.shift.j - eff.a.y * walk.c[k];
      const double hx = h(e.to, 0), hy = h(e.to, 1);
      const double w = eff.pi(k) * e.prob;
      S.xx += w * (gx * gx + 2.0 * gx * hx);
      S.yy += w * (gy * gy + 2.0 * gy * hy);
      S.xy += w * (gx * gy + gx * hy + hx * gy);
    }
  }
  eff.step_covariance = S;
  eff.B = {S.xx / eff.mean_time, S.xy / eff.mean_time, S.yy / eff.mean_time};
  const double tr = eff.B.xx + eff.B.yy;
  const double det = eff.B.xx * eff.B.yy - eff.B.xy * eff.B.xy;
  if (!(tr > 0.0 && det > 0.0)) {
    throw Error(ErrorCode::PoissonSolveFailure, "effective covariance is not positive definite");
  }

  if (walk.row_counts.size() == static_cast<std::size_t>(m)) {
    double vx = 0.0, vy = 0.0;
    bool ok = true;
    for (int k = 0; k < m; ++k) {
      if (walk.row_counts[k] == 0) {
        ok = false;
        break;
      }
      double sx = 0.0, sy = 0.0;
      for (const auto& e : walk.rows[k]) {
        sx += e.prob * (e.shift.i - mk[k].x) * (e.shift.i - mk[k].x);
        sy += e.prob * (e.shift.j - mk[k].y) * (e.shift.j - mk[k].y);
      }
      const double w = eff.pi(k) * eff.pi(k) / static_cast<double>(walk.row_counts[k]);
      vx += w * sx;
      vy += w * sy;
    }
    if (ok) eff.a_stderr = Vec2{std::sqrt(vx) / eff.mean_time, std::sqrt(vy) / eff.mean_time};
  }
  return eff;
}

RenewalWalkModel rotate_quarter(const RenewalWalkModel& walk) {
  RenewalWalkModel r = walk;
  for (auto& row : r.rows) {
    for (auto& e : row) e.shift = Cell{-e.shift.j, e.shift.i};
  }
  return r;
}

WalkSampler::WalkSampler(const RenewalWalkModel& walk) : walk_(&walk) {
  walk.validate();
  for (const auto& row : walk.rows) {
    std::vector<double> cdf(row.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) cdf[i] = acc += row[i].prob;
    for (auto& v : cdf) v /= acc;
    cdf_.push_back(std::move(cdf));
  }
}

const KernelEntry& WalkSampler::draw(int type, PathRng& rng) const {
  const auto& cdf = cdf_[type];
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const std::size_t i = std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
  return walk_->rows[type][i];
}

WalkTrace WalkSampler::run(int type, std::uint64_t steps, PathRng& rng) const {
  WalkTrace tr;
  tr.type = type;
  long long dx = 0, dy = 0;
  for (std::uint64_t s = 0; s < steps; ++s) {
    tr.time += walk_->c[tr.type];
    const auto& e = draw(tr.type, rng);
    dx += e.shift.i;
    dy += e.shift.j;
    tr.type = e.to;
  }
  tr.displacement = {static_cast<double>(dx), static_cast<double>(dy)};
  return tr;
}

WalkEstimate walk_batch_means(const RenewalWalkModel& walk, std::uint64_t steps, int batches, std::uint64_t seed) {
  if (batches < 2 || steps < static_cast<std::uint64_t>(batches)) {
    throw Error(ErrorCode::InvalidArgument, "batch means need at least two nonempty batches");
  }
  const WalkSampler sampler(walk);
  PathRng rng = derive_path_rng(seed, 0);
  const std::uint64_t per = steps / static_cast<std::uint64_t>(batches);
  std::vector<WalkTrace> b(batches);
  int type = 0;
  for (int i = 0; i < batches; ++i) {
    b[i] = sampler.run(type, per, rng);
    type = b[i].type;
  }
  WalkEstimate est;
  est.steps = per * static_cast<std::uint64_t>(batches);
  Vec2 D{};
  double T = 0.0;
  for (const auto& t : b) {
    D = D + t.displacement;
    T += t.time;
  }
  est.a = (1.0 / T) * D;
  const double Tbar = T / batches;
  std::vector<double> rx, ry, qxx, qxy, qyy;
  for (const auto& t : b) {
    rx.push_back(t.displacement.x / t.time);
    ry.push_back(t.displacement.y / t.time);
    const double yx = t.displacement.x - est.a.x * t.time;
    const double yy = t.displacement.y - est.a.y * t.time;
    qxx.push_back(yx * yx / Tbar);
    qxy.push_back(yx * yy / Tbar);
    qyy.push_back(yy * yy / Tbar);
  }
  const double nb = static_cast<double>(batches);
  const double corr = nb / (nb - 1.0);  // a estimated from the same batches
  const auto sxx = summarize(qxx), sxy = summarize(qxy), syy = summarize(qyy);
  est.B = {sxx.mean * corr, sxy.mean * corr, syy.mean * corr};
  est.B_stderr = {sxx.std_error * corr, sxy.std_error * corr, syy.std_error * corr};
  est.a_stderr = {summarize(rx).std_error, summarize(ry).std_error};
  return est;
}

EndpointTest endpoint_normality(const RenewalWalkModel& walk, const EffectiveCoefficients& eff, std::uint64_t walks,
                                std::uint64_t steps, const RunOptions& opt) {
  if (walks < 2 || steps == 0) throw Error(ErrorCode::InvalidArgument, "need at least two walks of positive length");
  const WalkSampler sampler(walk);
  std::vector<WalkTrace> ends(walks);
  parallel_for(walks, opt.threads, [&](std::size_t w) {
    PathRng rng = derive_path_rng(hash_combine(opt.seed, hash_label("endpoint")), w);
    ends[w] = sampler.run(0, steps, rng);
  });
  Vec2 D{};
  double T = 0.0;
  for (const auto& e : ends) {
    D = D + e.displacement;
    T += e.time;
  }
  EndpointTest res;
  res.mean_drift = (1.0 / T) * D;
  std::vector<double> xs, ys;
  for (const auto& e : ends) {
    const Vec2 c = e.displacement - e.time * res.mean_drift;
    const Vec2 z{c.x / std::sqrt(eff.B.xx * e.time), c.y / std::sqrt(eff.B.yy * e.time)};
    res.standardized.push_back(z);
    xs.push_back(z.x);
    ys.push_back(z.y);
  }
  res.ad_x = anderson_darling(xs, normal_cdf);
  res.ad_y = anderson_darling(ys, normal_cdf);
  res.normal_x = res.ad_x < kAndersonDarling1Percent;
  res.normal_y = res.ad_y < kAndersonDarling1Percent;
  return res;
}

bool in_free_region(const Model& model, const PathState& s) {
  if (s.in_tube) return !model.two_sided() || s.z > 0.0;
  if (model.kind() != GeometryKind::PeriodicPlane) return true;
  const Vec2 p = ambient(model, s);
  for (int k = 0; k < model.boundary_count(); ++k) {
    const auto& b = model.boundary(k);
    const Vec2 rel = p - b.center;
    const Vec2 d{rel.x - std::round(rel.x), rel.y - std::round(rel.y)};
    if (norm(d) < b.radius) return false;
  }
  return true;
}

SlowdownEstimate slowdown_factors(const Model& model, const SimConfig& cfg, const std::vector<SpectralSolution>& sols,
                                  Vec2 x, const std::vector<double>& horizons, std::uint64_t n,
                                  const RunOptions& opt) {
  if (model.kind() != GeometryKind::PeriodicPlane) {
    throw Error(ErrorCode::InvalidArgument, "slowdown factors need the periodic plane");
  }
  if (static_cast<int>(sols.size()) != model.boundary_count()) {
    throw Error(ErrorCode::InvalidArgument, "one spectral solution per boundary");
  }
  for (const auto& s : sols) {
    if (!(s.gamma < 0.0)) throw Error(ErrorCode::NotAllRepelling, "slowdown factors need every surface repelling");
  }
  if (horizons.empty() || n == 0) throw Error(ErrorCode::InvalidArgument, "need horizons and paths");
  std::vector<double> H = horizons;
  std::sort(H.begin(), H.end());
  if (!(H.front() > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizons must be positive");
  const std::size_t nh = H.size();

  const Simulator sim(model, cfg);
  const PathState start = state_at(model, x, cfg);
  if (!in_free_region(model, start)) throw Error(ErrorCode::InvalidArgument, "start point lies inside a hole");

  struct PathResult {
    std::vector<double> free;    // free time before each horizon
    std::vector<double> trap_sum, free_sum;  // completed sojourns, first one excluded
    std::vector<std::uint64_t> count;
    bool exhausted = false;
  };
  std::vector<PathResult> results(n);
  parallel_for(n, opt.threads, [&](std::size_t p) {
    PathResult r;
    r.free.assign(nh, 0.0);
    r.trap_sum.assign(nh, 0.0);
    r.free_sum.assign(nh, 0.0);
    r.count.assign(nh, 0);
    bool state = true;
    double since = 0.0;
    bool first = true;
    const StepObserver obs = [&](const PathState& s, double dt) {
      const bool f = in_free_region(model, s);
      if (f != state) {
        if (!first) {
          const double d = s.t - since;
          for (std::size_t h = 0; h < nh; ++h) {
            if (s.t > H[h]) continue;
            (state ? r.free_sum : r.trap_sum)[h] += d;
            ++r.count[h];
          }
        }
        first = false;
        state = f;
        since = s.t;
      }
      if (!f) return;
      for (std::size_t h = 0; h < nh; ++h) {
        if (s.t < H[h]) r.free[h] += std::min(dt, H[h] - s.t);
      }
    };
    PathRng rng = derive_path_rng(opt.seed, p);
    const auto out = sim.run_reflected(start, H.back(), rng, &obs);
    r.exhausted = out.reason == StopReason::TimeBudget;
    results[p] = std::move(r);
  });

  SlowdownEstimate est;
  for (const auto& r : results) est.budget_exhausted += r.exhausted ? 1 : 0;
  for (std::size_t h = 0; h < nh; ++h) {
    SlowdownWindow w;
    w.horizon = H[h];
    std::vector<double> frac;
    double trap = 0.0, fr = 0.0;
    for (const auto& r : results) {
      frac.push_back(r.free[h] / H[h]);
      trap += r.trap_sum[h];
      fr += r.free_sum[h];
      w.sojourns += r.count[h];
    }
    w.free_fraction = summarize(frac);
    if (trap + fr > 0.0) w.renewal_fraction = 1.0 - trap / (trap + fr);
    est.windows.push_back(w);
  }
  for (std::size_t h = 1; h < nh; ++h) {
    const auto& a = est.windows[h - 1].free_fraction;
    const auto& b = est.windows[h].free_fraction;
    if (b.mean > a.mean + 2.0 * std::hypot(a.std_error, b.std_error)) est.monotone = false;
  }
  return est;
}

}  // namespace degenflow
