#include "degenflow/cli/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "degenflow/cli/config.hpp"
#include "degenflow/cli/experiment.hpp"
#include "degenflow/homogenization.hpp"
#include "degenflow/metastability.hpp"
#include "degenflow/spectral.hpp"

namespace degenflow::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Builder {
  CriterionResult r;
  std::ostringstream measured;
  bool ok = true;

  void check(bool cond) { ok = ok && cond; }
  template <class T>
  Builder& operator<<(const T& v) {
    measured << v;
    return *this;
  }
};

RunOptions run_options(const ValidationOptions& opt, const std::string& label) {
  return RunOptions{hash_combine(opt.seed, hash_label(label)), opt.threads};
}

Model cylinder(double height, double delta, const BoundaryCoefficients& b0, const BoundaryCoefficients& b1) {
  std::vector<BoundarySpec> b(2);
  b[0].coefficients = b0;
  b[1].coefficients = b1;
  InteriorSpec in;
  in.height = height;
  in.delta = delta;
  return Model::build(GeometryKind::Cylinder, b, in);
}

BoundaryCoefficients constant_layer(double alpha, double beta, double rho) {
  BoundaryCoefficients bc;
  bc.alpha = FourierSeries(alpha);
  bc.beta = FourierSeries(beta);
  bc.rho = FourierSeries(rho);
  return bc;
}

// 1. gamma = 1 - beta/alpha and phi = 1 whenever beta/alpha is constant.
void spectral_closed_form(const ValidationOptions& opt, Builder& b) {
  struct Case {
    BoundaryCoefficients bc;
    double gamma;
  };
  std::vector<Case> cases(3);
  cases[0].bc.alpha = FourierSeries(1.0);
  cases[0].bc.beta = FourierSeries(0.5);
  cases[0].gamma = 0.5;
  cases[1].bc.alpha = FourierSeries(1.0);
  cases[1].bc.beta = FourierSeries(2.0);
  cases[1].gamma = -1.0;
  cases[2].bc.alpha = FourierSeries({1.0, 0.3});
  cases[2].bc.beta = FourierSeries({0.5, 0.15});
  cases[2].gamma = 0.5;
  const auto t0 = Clock::now();
  b << "gamma=";
  double worst_phi = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto bc = cases[i].bc;
    if (opt.inject_beta_sign_error) bc.beta = bc.beta.scaled(-1.0);
    const auto sol = solve_gamma(bc, 256);
    double dev = 0.0;
    for (double v : sol.phi) dev = std::max(dev, std::abs(v - 1.0));
    worst_phi = std::max(worst_phi, dev);
    b.check(std::abs(sol.gamma - cases[i].gamma) <= 1e-6 && dev <= 1e-6);
    b << (i ? "," : "") << fmt("%.9g", sol.gamma) << " (expected " << fmt("%g", cases[i].gamma) << ")";
  }
  const double s = seconds_since(t0);
  b.check(s < 1.0);
  b << " max|phi-1|=" << fmt("%.3g", worst_phi);
  b.r.tolerance = "|gamma err| <= 1e-6, |phi-1| <= 1e-6, n=256, < 1 s";
}

FourierSeries random_positive_series(std::mt19937_64& rng, double lo, double hi, double amp) {
  std::uniform_real_distribution<double> mean(lo, hi), u(-1.0, 1.0);
  const double m = mean(rng);
  std::vector<double> c{m}, s;
  for (int j = 1; j <= 2; ++j) {
    c.push_back(amp * m * u(rng) / 2.0);
    s.push_back(amp * m * u(rng) / 2.0);
  }
  return FourierSeries(c, s);
}

// 2. d lambda / d gamma at 0 equals the pi-average of beta - alpha.
void slope_at_zero(const ValidationOptions& opt, Builder& b) {
  std::mt19937_64 rng(hash_combine(opt.seed, hash_label("slope")));
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    BoundaryCoefficients bc;
    bc.a = random_positive_series(rng, 0.5, 2.0, 0.8);
    bc.b = FourierSeries({std::uniform_real_distribution<double>(-1.0, 1.0)(rng), 0.2}, {0.1});
    bc.alpha = random_positive_series(rng, 0.5, 2.0, 0.8);
    bc.beta = random_positive_series(rng, 0.2, 3.0, 0.8);
    validate_coefficients(bc, 1);
    const double slope = lambda_slope_at_zero(bc, 256);
    const auto [abar, bbar] = circle_averages(bc, invariant_measure(bc, 256));
    worst = std::max(worst, std::abs(slope - (bbar - abar)));
  }
  const double s = seconds_since(t0);
  b.check(worst <= 1e-6 && s < 5.0);
  b << "max|slope - (beta_bar - alpha_bar)|=" << fmt("%.3g", worst) << " over 5 sets";
  b.r.tolerance = "1e-6, < 5 s";
}

struct LayerCase {
  Model model;
  SpectralSolution sol;
  SimConfig cfg;
  double kappa = 0.9;
};

LayerCase exit_prob_case() {
  const auto b0 = constant_layer(1.0, 0.5, 1e-6);
  LayerCase c{cylinder(5.0, 2.0, b0, BoundaryCoefficients{}), solve_gamma(b0, 256), SimConfig{}};
  c.cfg.eps = 1e-3;
  c.cfg.dt = 1e-3;
  c.cfg.c_micro = 0.01;
  c.cfg.dt_micro = 5.0;
  return c;
}

Proportion run_exit_prob(const LayerCase& c, const SimConfig& cfg, double ratio, std::uint64_t n,
                         const RunOptions& ro) {
  return estimate_exit_prob(c.model, cfg, 0, c.sol, ratio * c.kappa, c.kappa, n, ro).to_level;
}

// 3. P(reach Gamma_kappa before S) = (zeta/kappa)^gamma.
void exit_probability(const ValidationOptions& opt, Builder& b) {
  const auto c = exit_prob_case();
  const auto t0 = Clock::now();
  const std::pair<double, double> points[] = {{0.25, 0.5}, {1.0 / 9.0, 1.0 / 3.0}};
  for (const auto& [ratio, expected] : points) {
    const auto p = run_exit_prob(c, c.cfg, ratio, 100000, run_options(opt, "c3:" + format_double(ratio)));
    b.check(expected >= p.lo && expected <= p.hi);
    b << "zeta/kappa=" << fmt("%.4g", ratio) << ": " << fmt("%.5f", p.estimate) << " [" << fmt("%.5f", p.lo) << ","
      << fmt("%.5f", p.hi) << "] vs " << fmt("%.5f", expected) << "; ";
  }
  const double s = seconds_since(t0);
  b.check(s < 300.0);
  b << "gamma=" << fmt("%.6f", c.sol.gamma);
  b.r.tolerance = "oracle inside Wilson 95% CI, N=1e5, < 300 s";
}

// 4. Mean exit time from the layer scales like eps^-gamma.
void exit_time_exponent(const ValidationOptions& opt, Builder& b) {
  struct Case {
    double beta, rho, kappa, c_micro, dt_micro;
  };
  const Case cases[] = {{0.5, 0.01, 0.3, 1.0, 10.0}, {-0.5, 1.0, 0.02, 10.0, 5.0}};
  const auto t0 = Clock::now();
  for (const auto& cs : cases) {
    const auto b0 = constant_layer(1.0, cs.beta, cs.rho);
    const auto model = cylinder(5.0, 2.0, b0, BoundaryCoefficients{});
    const auto sol = solve_gamma(b0, 256);
    std::vector<std::pair<double, double>> pairs;
    std::uint64_t exhausted = 0;
    for (double eps : {4e-3, 2e-3, 1e-3}) {
      SimConfig cfg;
      cfg.eps = eps;
      cfg.dt = 1e-3;
      cfg.max_time = 1e6;
      cfg.c_micro = cs.c_micro;
      cfg.dt_micro = cs.dt_micro;
      const auto est = estimate_exit_time(model, cfg, 0, sol, cs.kappa, 20000,
                                          run_options(opt, "c4:" + format_double(cs.beta) + ":" + format_double(eps)));
      exhausted += est.budget_exhausted;
      pairs.emplace_back(eps, est.time.mean);
    }
    const auto fit = fit_scaling_exponent(pairs);
    b.check(std::abs(fit.slope + sol.gamma) <= 0.1 && exhausted == 0);
    b << "gamma=" << fmt("%.3g", sol.gamma) << ": slope " << fmt("%.4f", fit.slope) << " (se "
      << fmt("%.3f", fit.stderr_slope) << ")";
    if (exhausted) b << " budget exhausted on " << exhausted << " paths";
    b << "; ";
  }
  const double s = seconds_since(t0);
  b.check(s < 900.0);
  b.r.tolerance = "|slope + gamma| <= 0.1, N=2e4 per eps, < 900 s";
}

// 5. Hitting measures: symmetry, independence of the start angle, stability in kappa.
void hitting_measure(const ValidationOptions& opt, Builder& b) {
  const auto t0 = Clock::now();
  SimConfig cfg;
  cfg.eps = 1e-3;
  cfg.dt = 1e-3;
  cfg.dt_micro = 10.0;
  cfg.c_micro = 2.0;
  const double kappa = 0.05;
  const std::uint64_t n = 100000;
  const int bins = 32;

  BoundaryCoefficients sym;
  const auto sym_model = cylinder(1.0, 0.4, sym, BoundaryCoefficients{});
  const auto sym_sol = solve_gamma(sym, 256);
  const auto nu = estimate_hitting_measure(sym_model, cfg, 0, sym_sol, kappa, HitStart::LevelSet, n, bins,
                                           run_options(opt, "c5:uniform"));
  const double tv1 = measure_distance(nu.measure, uniform_circle(bins)).tv;

  BoundaryCoefficients bc;
  bc.alpha = FourierSeries({1.0, 0.3});
  bc.beta = FourierSeries({0.5}, {0.0, 0.2});
  bc.b = FourierSeries(0.5);
  bc.a = FourierSeries(4.0);
  const auto model = cylinder(1.0, 0.4, bc, BoundaryCoefficients{});
  const auto sol = solve_gamma(bc, 256);
  const auto h0 =
      estimate_hitting_measure(model, cfg, 0, sol, kappa, HitStart::LevelSet, n, bins, run_options(opt, "c5:angle0"), 0.0);
  const auto hpi = estimate_hitting_measure(model, cfg, 0, sol, kappa, HitStart::LevelSet, n, bins,
                                            run_options(opt, "c5:anglepi"), kTwoPi / 2.0);
  const double tv2 = measure_distance(h0.measure, hpi.measure).tv;

  const auto full = estimate_hitting_measure(model, cfg, 0, sol, kappa, HitStart::Surface, n, bins,
                                             run_options(opt, "c5:kappa"));
  const auto half = estimate_hitting_measure(model, cfg, 0, sol, kappa / 2.0, HitStart::Surface, n, bins,
                                             run_options(opt, "c5:kappa/2"));
  const double tv3 = measure_distance(full.measure, half.measure).tv;

  const double s = seconds_since(t0);
  b.check(tv1 <= 0.05 && tv2 <= 0.05 && tv3 <= 0.05 && s < 600.0);
  b << "TV(nu, uniform)=" << fmt("%.4f", tv1) << "; TV(theta0=0, pi)=" << fmt("%.4f", tv2)
    << "; TV(kappa, kappa/2)=" << fmt("%.4f", tv3);
  b.r.tolerance = "each TV <= 0.05, 32 bins, N=1e5, < 600 s";
}

// 6. chain_absorption against direct propagation of the transient mass.
Eigen::VectorXd propagate_absorption(const Eigen::MatrixXd& q, const Eigen::VectorXd& p, int l) {
  const int m = static_cast<int>(q.rows());
  Eigen::VectorXd out = p.head(l);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(m);
  mass.tail(m - l) = p.tail(m - l);
  for (int step = 0; step < 5000 && mass.sum() > 0.0; ++step) {
    const Eigen::VectorXd next = q.transpose() * mass;
    out += next.head(l);
    mass.setZero();
    mass.tail(m - l) = next.tail(m - l);
  }
  return out;
}

void chain_exactness(const ValidationOptions& opt, Builder& b) {
  std::mt19937_64 rng(hash_combine(opt.seed, hash_label("chains")));
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const auto t0 = Clock::now();
  double worst = 0.0;
  int checks = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 1 + rep % 4;
    EmbeddedChain c;
    c.q = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) c.q(i, j) = (i == j && m > 1) ? 0.0 : u(rng);
      c.q.row(i) /= c.q.row(i).sum();
    }
    c.p = Eigen::VectorXd(m);
    for (int i = 0; i < m; ++i) c.p(i) = u(rng);
    c.p /= c.p.sum();
    for (int l = 1; l <= m; ++l) {
      const auto got = chain_absorption(c, l);
      const auto want = propagate_absorption(c.q, c.p, l);
      worst = std::max(worst, (got - want).lpNorm<Eigen::Infinity>());
      ++checks;
    }
  }
  const double s = seconds_since(t0);
  b.check(worst <= 1e-12 && s < 1.0);
  b << "max deviation " << fmt("%.3g", worst) << " over " << checks << " (chain, l) pairs";
  b.r.tolerance = "1e-12, < 1 s";
}

// 7. Reflected both-attracting cylinder: mixture early, deepest boundary late.
void metastable_windows(const ValidationOptions& opt, Builder& b) {
  const auto t0 = Clock::now();
  auto b0 = constant_layer(1.0, 0.0, 0.01);
  auto b1 = constant_layer(1.0, 0.5, 1.0);
  b0.a = FourierSeries(4.0);
  b1.a = FourierSeries(4.0);
  const auto model = cylinder(1.0, 0.4, b0, b1);
  const auto s0 = solve_gamma(b0, 256);
  const auto s1 = solve_gamma(b1, 256);
  SimConfig cfg;
  cfg.eps = 1e-2;
  cfg.dt = 1e-3;
  cfg.max_time = 1e5;
  const double y0 = boost::math::tools::bisect(
                        [&](double y) { return cylinder_commitment(model, y) - 0.5; }, 0.05, 0.95,
                        boost::math::tools::eps_tolerance<double>(24))
                        .first;
  const auto layout = BinLayout::full(model);
  const double capture = 0.5 * model.delta();
  const auto pi0 = circle_from_density(s0.pi, layout.angular);
  const auto pi1 = circle_from_density(s1.pi, layout.angular);
  const auto early_target = mixture(layout, {{0.5, pi0}, {0.5, pi1}});
  const auto late_target = mixture(layout, {{1.0, pi0}, {0.0, pi1}});
  const double t_early = std::sqrt(10.0), t_late = 1000.0;
  const auto early = simulate_metastable(model, cfg, {0.0, y0}, t_early, 5000, ProcessMode::Reflected, layout,
                                         capture, run_options(opt, "c7:early"));
  const auto late = simulate_metastable(model, cfg, {0.0, y0}, t_late, 5000, ProcessMode::Reflected, layout, capture,
                                        run_options(opt, "c7:late"));
  const double tv_early = measure_distance(early.measure, early_target).tv;
  const double tv_late = measure_distance(late.measure, late_target).tv;
  const double s = seconds_since(t0);
  b.check(tv_early <= 0.1 && tv_late <= 0.1 && late.budget_exhausted == 0 && s < 1800.0);
  b << "gamma=(" << fmt("%.3g", s0.gamma) << "," << fmt("%.3g", s1.gamma) << ") y0=" << fmt("%.4f", y0)
    << "; t=" << fmt("%.3g", t_early) << " TV(., pi1/2+pi2/2)=" << fmt("%.4f", tv_early) << "; t=" << fmt("%g", t_late)
    << " TV(., pi1)=" << fmt("%.4f", tv_late);
  b.r.tolerance = "each TV <= 0.1, N=5000, < 1800 s";
}

// 8. Stopped all-repelling cylinder: interior law early, mostly absorbed on S1 late.
void stopped_windows(const ValidationOptions& opt, Builder& b) {
  const auto t0 = Clock::now();
  const auto b0 = constant_layer(1.0, 2.0, 0.2);
  const auto b1 = constant_layer(1.0, 4.0, 0.5);
  const auto model = cylinder(1.0, 0.4, b0, b1);
  const std::vector<SpectralSolution> sols{solve_gamma(b0, 256), solve_gamma(b1, 256)};
  SimConfig cfg;
  cfg.eps = 1e-3;
  cfg.dt = 1e-3;
  cfg.max_time = 1e6;
  cfg.dt_log = 1.0;
  cfg.dt_micro = 1.0;
  const Vec2 x{1.0, 0.5};
  const auto layout = BinLayout::full(model);

  SimConfig free = cfg;
  free.eps = 0.0;
  MuOptions mo;
  mo.T = 1000.0;
  mo.burn_in = 10.0;
  mo.paths = 250;
  const auto mu = estimate_mu(model, free, sols, x, mo, run_options(opt, "c8:mu"));
  const double t_early = 31.6, t_late = 1e4;
  const auto early = simulate_metastable(model, cfg, x, t_early, 50000, ProcessMode::Stopped, layout, 0.0,
                                         run_options(opt, "c8:early"));
  const double boundary_early = early.measure.boundary_mass(0) + early.measure.boundary_mass(1);
  const double tv_mu = measure_distance(early.measure.interior(), mu.occupation).tv;

  const double kappa = 0.1;
  const auto nu = estimate_hitting_measure(model, cfg, 0, sols[0], kappa, HitStart::LevelSet, 2000, layout.angular,
                                           run_options(opt, "c8:nu"));
  const auto late = simulate_metastable(model, cfg, x, t_late, 5000, ProcessMode::Stopped, layout, 0.0,
                                        run_options(opt, "c8:late"));
  const double s1_mass = late.measure.boundary_mass(0);
  const double tv_nu = measure_distance(late.measure.angular(0), nu.measure).tv;
  const double s = seconds_since(t0);
  b.check(boundary_early <= 0.05 && tv_mu <= 0.1 && s1_mass >= 0.95 && tv_nu <= 0.1 && s < 1800.0);
  b << "gamma=(" << fmt("%.3g", sols[0].gamma) << "," << fmt("%.3g", sols[1].gamma) << "); t=" << fmt("%g", t_early)
    << " boundary mass " << fmt("%.4f", boundary_early) << " TV(interior, mu)=" << fmt("%.4f", tv_mu) << "; t="
    << fmt("%g", t_late) << " S1 mass " << fmt("%.4f", s1_mass) << " TV(angular, nu1)=" << fmt("%.4f", tv_nu);
  b.r.tolerance = "boundary mass <= 0.05, TV <= 0.1; S1 mass >= 0.95, TV <= 0.1; < 1800 s";
}

double relative_gap(double x, double ref, double scale) { return std::abs(x - ref) / scale; }

// 9. Periodic plane with one disk per cell: zero drift, B by two routes, Gaussian endpoints.
void homogenization(const ValidationOptions& opt, Builder& b) {
  const auto t0 = Clock::now();
  BoundarySpec disk;
  disk.center = {0.5, 0.5};
  disk.radius = 0.25;
  disk.coefficients = constant_layer(1.0, 0.5, 0.5);
  InteriorSpec in;
  in.delta = 0.1;
  const auto model = Model::build(GeometryKind::PeriodicPlane, {disk}, in);
  const std::vector<SpectralSolution> sols{solve_gamma(disk.coefficients, 256)};
  SimConfig cfg;
  cfg.eps = 1e-2;
  cfg.dt = 1e-3;
  cfg.c_micro = 2.0;
  cfg.dt_micro = 5.0;
  RenewalBuildOptions bo;
  bo.eps = {cfg.eps};
  bo.n = 20000;
  const auto walk = build_renewal_model(model, cfg, sols, bo, run_options(opt, "c9:kernel"));
  const auto eff = effective_diffusion(walk);
  const Vec2 se = eff.a_stderr.value_or(Vec2{});
  const bool drift_ok = std::abs(eff.a.x) <= 3.0 * se.x && std::abs(eff.a.y) <= 3.0 * se.y;

  const auto bm = walk_batch_means(walk, 10'000'000, 1000, run_options(opt, "c9:walk").seed);
  const double scale_xy = std::sqrt(bm.B.xx * bm.B.yy);
  const double rel_xx = relative_gap(eff.B.xx, bm.B.xx, bm.B.xx);
  const double rel_yy = relative_gap(eff.B.yy, bm.B.yy, bm.B.yy);
  const double rel_xy = relative_gap(eff.B.xy, bm.B.xy, scale_xy);
  const bool b_ok = rel_xx <= 0.1 && rel_yy <= 0.1 && rel_xy <= 0.1;
  // Kernel route against the simulated walk, 3 standard errors of the walk estimate.
  const bool routes_ok = std::abs(eff.a.x - bm.a.x) <= 3.0 * bm.a_stderr.x &&
                         std::abs(eff.a.y - bm.a.y) <= 3.0 * bm.a_stderr.y &&
                         std::abs(eff.B.xx - bm.B.xx) <= 3.0 * bm.B_stderr.xx &&
                         std::abs(eff.B.yy - bm.B.yy) <= 3.0 * bm.B_stderr.yy &&
                         std::abs(eff.B.xy - bm.B.xy) <= 3.0 * bm.B_stderr.xy;

  const auto ends = endpoint_normality(walk, eff, 200, 100000, run_options(opt, "c9:endpoints"));
  const double s = seconds_since(t0);
  b.check(drift_ok && b_ok && routes_ok && ends.normal_x && ends.normal_y && s < 1200.0);
  b << "a=(" << fmt("%.3g", eff.a.x) << "," << fmt("%.3g", eff.a.y) << ") se=(" << fmt("%.3g", se.x) << ","
    << fmt("%.3g", se.y) << "); B kernel=(" << fmt("%.4g", eff.B.xx) << "," << fmt("%.4g", eff.B.xy) << ","
    << fmt("%.4g", eff.B.yy) << ") walk=(" << fmt("%.4g", bm.B.xx) << "," << fmt("%.4g", bm.B.xy) << ","
    << fmt("%.4g", bm.B.yy) << ") rel=(" << fmt("%.3f", rel_xx) << "," << fmt("%.3f", rel_xy) << ","
    << fmt("%.3f", rel_yy) << ")" << (routes_ok ? "" : " routes differ by > 3 se") << "; AD=(" << fmt("%.3f", ends.ad_x)
    << "," << fmt("%.3f", ends.ad_y) << ") tail mass " << fmt("%.2g", walk.tail[0]);
  b.r.tolerance = "|a_i| <= 3 se, B within 10% per entry, AD < 3.857 per axis, < 1200 s";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// 10. Thread-count invariance of the artifacts and robustness of criterion 3 to numerical knobs.
void determinism(const ValidationOptions& opt, Builder& b) {
  const auto t0 = Clock::now();
  const std::string config =
      "[model]\ngeometry = cylinder\nheight = 5\ndelta = 2\n"
      "[model.boundary.1]\nalpha = 1\nbeta = 0.5\nrho = 1e-6\n"
      "[model.boundary.2]\n"
      "[sim]\neps = 1e-3\ndt = 1e-3\nc_micro = 0.01\ndt.micro = 5\n"
      "[experiment]\nkind = exitprob\nkappa = 0.9\nzeta_ratio = 0.25, 0.5\nn = 2000\n";
  const auto plans = parse_config(config);
  const fs::path root = fs::temp_directory_path() / ("degenflow-validate-" + hex_hash(hash_combine(
                                                                                opt.seed, static_cast<std::uint64_t>(
                                                                                              Clock::now().time_since_epoch().count()))));
  std::string csv[2];
  const int threads[2] = {1, 4};
  bool runs_ok = true;
  for (int i = 0; i < 2; ++i) {
    RunSettings rs;
    rs.out_dir = (root / ("threads" + std::to_string(threads[i]))).string();
    rs.threads = threads[i];
    rs.seed = opt.seed;
    const auto res = run_experiment(plans.front(), rs);
    runs_ok = runs_ok && res.exit_code == 0;
    csv[i] = read_file(fs::path(rs.out_dir) / "results.csv");
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  const bool identical = runs_ok && !csv[0].empty() && csv[0] == csv[1];
  b << "results.csv threads 1 vs 4 " << (identical ? "identical" : "differ") << "; ";

  const auto c = exit_prob_case();
  const std::uint64_t n = 100000;
  const auto ro = run_options(opt, "c10:perturb");
  const auto base = run_exit_prob(c, c.cfg, 0.25, n, ro);
  auto se = [n](const Proportion& p) { return std::sqrt(p.estimate * (1.0 - p.estimate) / static_cast<double>(n)); };
  struct Variant {
    const char* name;
    SimConfig cfg;
  };
  std::vector<Variant> variants;
  auto add = [&](const char* name, auto edit) {
    SimConfig cfg = c.cfg;
    edit(cfg);
    variants.push_back({name, cfg});
  };
  add("dt/2", [](SimConfig& s) { s.dt *= 0.5; });
  add("c_micro*0.9", [](SimConfig& s) { s.c_micro *= 0.9; });
  add("c_micro*1.1", [](SimConfig& s) { s.c_micro *= 1.1; });
  add("log_upper*0.9", [](SimConfig& s) { s.log_upper_fraction *= 0.9; });
  add("log_upper*1.1", [](SimConfig& s) { s.log_upper_fraction *= 1.1; });
  bool stable = true;
  b << "base " << fmt("%.5f", base.estimate);
  for (const auto& v : variants) {
    const auto p = run_exit_prob(c, v.cfg, 0.25, n, ro);
    const double delta = p.estimate - base.estimate;
    const double bound = 1.959963984540054 * std::hypot(se(base), se(p));
    stable = stable && std::abs(delta) <= bound;
    b << ", " << v.name << " " << fmt("%+.5f", delta) << "/" << fmt("%.5f", bound);
  }
  const double s = seconds_since(t0);
  b.check(identical && stable && s < 600.0);
  b.r.tolerance = "byte-identical CSV; |shift| <= 1.96 sqrt(se1^2 + se2^2); < 600 s";
}

struct Criterion {
  int id;
  const char* title;
  bool fast;
  void (*run)(const ValidationOptions&, Builder&);
};

const Criterion kCriteria[] = {
    {1, "spectral closed form", true, spectral_closed_form},
    {2, "eigenvalue-curve slope at zero", true, slope_at_zero},
    {3, "boundary-layer exit probability", false, exit_probability},
    {4, "exit-time exponent", false, exit_time_exponent},
    {5, "hitting-measure symmetry and stability", false, hitting_measure},
    {6, "embedded-chain exactness", true, chain_exactness},
    {7, "metastable windows, reflected", false, metastable_windows},
    {8, "metastable windows, stopped", false, stopped_windows},
    {9, "homogenization", false, homogenization},
    {10, "engineering determinism", false, determinism},
};

}  // namespace

bool ValidationReport::all_passed() const {
  return std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.passed || c.skipped; });
}

ValidationReport validate_suite(const ValidationOptions& opt) {
  ValidationReport report;
  for (const auto& c : kCriteria) {
    if (!opt.only.empty()) {
      if (std::find(opt.only.begin(), opt.only.end(), c.id) == opt.only.end()) continue;
    } else if (opt.level == ValidationLevel::Fast && !c.fast) {
      continue;
    }
    Builder b;
    b.r.id = c.id;
    b.r.title = c.title;
    const auto t0 = Clock::now();
    try {
      c.run(opt, b);
      b.r.passed = b.ok;
      b.r.measured = b.measured.str();
      while (b.r.measured.ends_with(' ') || b.r.measured.ends_with(';')) b.r.measured.pop_back();
    } catch (const std::exception& e) {
      b.r.passed = false;
      b.r.measured = b.measured.str() + "error: " + e.what();
    }
    b.r.seconds = seconds_since(t0);
    report.criteria.push_back(b.r);
    if (opt.on_result) opt.on_result(report.criteria.back());
  }
  return report;
}

std::string format_result(const CriterionResult& r) {
  const char* status = r.skipped ? "SKIP" : r.passed ? "PASS" : "FAIL";
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.1f s", r.seconds);
  return std::string(status) + " " + std::to_string(r.id) + " " + r.title + ": " + r.measured + " | " + r.tolerance +
         " | " + secs;
}

double cylinder_commitment(const Model& model, double y) {
  if (model.kind() != GeometryKind::Cylinder) {
    throw Error(ErrorCode::InvalidArgument, "commitment oracle needs a cylinder");
  }
  const double h = model.interior().height;
  if (!(y > 0.0 && y < h)) throw Error(ErrorCode::InvalidArgument, "start height outside (0, H)");
  // Height process at eps = 0: a(y) d2 + b(y) d.
  auto ratio = [&](double v) {
    ChartLocation loc;
    const auto g = model.drift_diffusion(Vec2{0.0, v}, 0.0, &loc);
    const double drift = loc.region == Region::Tube && loc.k == 1 ? -g.drift.y : g.drift.y;
    return drift / g.diffusion.yy;
  };
  const double mid = 0.5 * h;
  boost::math::quadrature::tanh_sinh<double> outer;
  auto log_scale_density = [&](double u) {
    return -boost::math::quadrature::gauss_kronrod<double, 31>::integrate(ratio, mid, u, 10, 1e-9);
  };
  auto scale = [&](double lo, double hi) {
    return outer.integrate([&](double u) { return std::exp(log_scale_density(u)); }, lo, hi, 1e-8);
  };
  const double upper = scale(y, h);
  const double lower = scale(0.0, y);
  return upper / (upper + lower);
}

}  // namespace degenflow::cli
