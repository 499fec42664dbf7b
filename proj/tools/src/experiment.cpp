#include "degenflow/cli/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "degenflow/measure.hpp"
#include "degenflow/metastability.hpp"
#include "degenflow/rng.hpp"
#include "degenflow/spectral.hpp"
#include "degenflow/stats.hpp"

#ifndef DEGENFLOW_VERSION
#define DEGENFLOW_VERSION "unknown"
#endif

namespace degenflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  const ExperimentPlan& plan;
  const Model& model;
  const std::vector<SpectralSolution>& sols;
  std::uint64_t seed;
  int threads;
  CsvTable table;
  json results = json::object();
  std::uint64_t paths = 0;
  std::uint64_t exhausted = 0;

  RunOptions options(const std::string& label) const { return {grid_seed(seed, label), threads}; }
  SimConfig sim(double eps) const {
    SimConfig c = plan.sim;
    c.eps = eps;
    return c;
  }
  int k() const { return plan.boundary - 1; }
};

json proportion_json(const Proportion& p) {
  return {{"estimate", p.estimate}, {"lo", p.lo}, {"hi", p.hi}, {"successes", p.successes}, {"trials", p.trials}};
}

json mat2_json(Mat2 m) { return json::array({json::array({m.xx, m.xy}), json::array({m.xy, m.yy})}); }

std::string label(const char* kind, std::initializer_list<std::pair<const char*, double>> keys) {
  std::string s = kind;
  for (const auto& [k, v] : keys) s += std::string("/") + k + "=" + format_double(v);
  return s;
}

void run_spectral(Context& c) {
  c.table.header = {"boundary", "gamma", "lambda", "alpha_bar", "beta_bar", "stability", "residual", "lambda_slope"};
  json list = json::array();
  for (int k = 0; k < c.model.boundary_count(); ++k) {
    const auto& s = c.sols[k];
    const double slope = lambda_slope_at_zero(c.model.coefficients(k), c.plan.spectral_n);
    const char* stab = s.gamma > 0.0 ? "attracting" : "repelling";
    c.table.add({k + 1LL, s.gamma, s.lambda, s.alpha_bar, s.beta_bar, std::string(stab), s.residual, slope});
    list.push_back({{"boundary", k + 1}, {"gamma", s.gamma}, {"stability", stab}, {"lambda_slope", slope}});
  }
  c.results["boundaries"] = list;
}

void run_exitprob(Context& c) {
  c.table.header = {"eps", "kappa", "zeta", "p_level", "lo", "hi", "successes", "trials", "p_surface",
                    "power_law", "budget_exhausted"};
  const auto& sol = c.sols[c.k()];
  json rows = json::array();
  for (double eps : c.plan.eps) {
    for (double kappa : c.plan.kappa) {
      for (double ratio : c.plan.zeta_ratio) {
        const double zeta = ratio * kappa;
        const auto est = estimate_exit_prob(c.model, c.sim(eps), c.k(), sol, zeta, kappa, c.plan.n,
                                            c.options(label("exitprob", {{"eps", eps}, {"kappa", kappa}, {"zeta", zeta}})));
        const double law = std::pow(ratio, sol.gamma);
        c.table.add({eps, kappa, zeta, est.to_level.estimate, est.to_level.lo, est.to_level.hi,
                     static_cast<long long>(est.to_level.successes), static_cast<long long>(est.to_level.trials),
                     est.to_surface.estimate, law, static_cast<long long>(est.budget_exhausted)});
        c.paths += c.plan.n;
        c.exhausted += est.budget_exhausted;
        rows.push_back({{"eps", eps}, {"kappa", kappa}, {"zeta", zeta}, {"p_level", proportion_json(est.to_level)},
                        {"power_law", law}});
      }
    }
  }
  c.results["grid"] = rows;
}

void run_exittime(Context& c) {
  c.table.header = {"eps", "kappa", "mean", "std_error", "q10", "q50", "q90", "n", "budget_exhausted"};
  const auto& sol = c.sols[c.k()];
  json fits = json::array();
  for (double kappa : c.plan.kappa) {
    std::vector<std::pair<double, double>> pairs;
    for (double eps : c.plan.eps) {
      const auto est = estimate_exit_time(c.model, c.sim(eps), c.k(), sol, kappa, c.plan.n,
                                          c.options(label("exittime", {{"eps", eps}, {"kappa", kappa}})));
      c.table.add({eps, kappa, est.time.mean, est.time.std_error, est.q10, est.q50, est.q90,
                   static_cast<long long>(est.time.n), static_cast<long long>(est.budget_exhausted)});
      c.paths += c.plan.n;
      c.exhausted += est.budget_exhausted;
      if (est.time.n > 0) pairs.emplace_back(eps, est.time.mean);
    }
    if (pairs.size() >= 2) {
      const auto fit = fit_scaling_exponent(pairs);
      fits.push_back({{"kappa", kappa}, {"slope", fit.slope}, {"stderr_slope", fit.stderr_slope},
                      {"intercept", fit.intercept}, {"expected_slope", -sol.gamma}});
    }
  }
  c.results["fits"] = fits;
}

void run_hitmeasure(Context& c) {
  c.table.header = {"eps", "kappa", "bin", "theta_lo", "theta_hi", "mass", "std_error"};
  const auto& sol = c.sols[c.k()];
  json rows = json::array();
  for (double eps : c.plan.eps) {
    for (double kappa : c.plan.kappa) {
      const auto est = estimate_hitting_measure(c.model, c.sim(eps), c.k(), sol, kappa, c.plan.start, c.plan.n,
                                                c.plan.bins,
                                                c.options(label("hitmeasure", {{"eps", eps}, {"kappa", kappa}})));
      const auto se = est.measure.bin_std_errors();
      for (int b = 0; b < c.plan.bins; ++b) {
        c.table.add({eps, kappa, static_cast<long long>(b), kTwoPi * b / c.plan.bins, kTwoPi * (b + 1) / c.plan.bins,
                     est.measure.mass()[b], se[b]});
      }
      c.paths += c.plan.n;
      c.exhausted += est.budget_exhausted;
      const auto d = measure_distance(est.measure, uniform_circle(c.plan.bins));
      rows.push_back({{"eps", eps}, {"kappa", kappa}, {"tv_uniform", d.tv}, {"w1_uniform", d.w1.value_or(0.0)}});
    }
  }
  c.results["grid"] = rows;
}

void run_transition(Context& c) {
  c.table.header = {"eps", "from", "to", "q", "lo", "hi", "row_count"};
  const int m = c.model.boundary_count();
  for (double eps : c.plan.eps) {
    const auto est = estimate_transition_kernel(c.model, c.sim(eps), c.sols, c.plan.n,
                                                c.options(label("transition", {{"eps", eps}})));
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (i == j) continue;
        c.table.add({eps, i + 1LL, j + 1LL, est.q(i, j), est.lo(i, j), est.hi(i, j),
                     static_cast<long long>(est.row_counts[i])});
      }
    }
    c.paths += c.plan.n * static_cast<std::uint64_t>(m);
    c.exhausted += est.budget_exhausted;
  }
}

void run_metastable(Context& c) {
  c.table.header = {"eps", "t", "window", "bin", "empirical", "predicted"};
  const int m = c.model.boundary_count();
  const BinLayout layout = BinLayout::full(c.model, c.plan.bins, c.plan.bins);
  std::vector<BinnedMeasure> pis;
  for (const auto& s : c.sols) pis.push_back(circle_from_density(s.pi, c.plan.bins));
  ProfileInputs in;
  for (const auto& s : c.sols) in.gamma.push_back(s.gamma);
  const double capture = c.plan.capture > 0.0 ? c.plan.capture : 0.5 * c.model.delta();
  json rows = json::array();
  for (double eps : c.plan.eps) {
    const SimConfig cfg = c.sim(eps);
    std::vector<BinnedMeasure> nus;
    std::optional<BinnedMeasure> mu;
    if (c.plan.mode == ProcessMode::Reflected) {
      const auto p = estimate_p(c.model, cfg, c.sols, *c.plan.x, c.plan.kappa.front(), c.plan.n,
                                c.options(label("metastable/p", {{"eps", eps}})));
      std::vector<double> pv;
      for (const auto& pk : p.p) pv.push_back(pk.estimate);
      in.p = pv;
      c.paths += c.plan.n;
      c.exhausted += p.budget_exhausted;
      int attracting = 0;
      for (const auto& s : c.sols) attracting += s.gamma > 0.0;
      if (attracting >= 3) {
        const auto q = estimate_transition_kernel(c.model, cfg, c.sols, c.plan.n,
                                                  c.options(label("metastable/q", {{"eps", eps}})));
        in.q = q.q;
        c.paths += c.plan.n * static_cast<std::uint64_t>(m);
        c.exhausted += q.budget_exhausted;
      }
    } else {
      for (int k = 0; k < m; ++k) {
        const double kappa = c.plan.kappa.empty() ? 0.25 * c.model.delta() : c.plan.kappa.front();
        const auto nu = estimate_hitting_measure(
            c.model, cfg, k, c.sols[k], kappa, HitStart::LevelSet, c.plan.n, c.plan.bins,
            c.options(label("metastable/nu", {{"eps", eps}, {"k", k}})));
        nus.push_back(nu.measure);
        c.paths += c.plan.n;
        c.exhausted += nu.budget_exhausted;
      }
      in.have_nu = true;
      MuOptions mo;
      mo.T = c.plan.T;
      mo.burn_in = c.plan.burn_in;
      mo.paths = std::max<std::uint64_t>(1, c.plan.n / 100);
      mo.bins = c.plan.bins;
      SimConfig c0 = cfg;
      c0.eps = 0.0;
      const auto est = estimate_mu(c.model, c0, c.sols, *c.plan.x, mo, c.options("metastable/mu"));
      mu = est.occupation;
      in.have_mu = true;
      c.paths += mo.paths;
      c.exhausted += est.budget_exhausted;
    }
    const auto prof = predict_metastable(in, c.plan.mode, eps);
    for (double t : c.plan.times) {
      std::size_t wi = 0;
      while (wi + 1 < prof.windows.size() && t >= prof.windows[wi].hi) ++wi;
      const auto& w = prof.windows[wi];
      const auto pred = profile_measure(w, layout, pis, nus, mu ? &*mu : nullptr);
      const auto sample = simulate_metastable(c.model, cfg, *c.plan.x, t, c.plan.n, c.plan.mode, layout, capture,
                                              c.options(label("metastable", {{"eps", eps}, {"t", t}})));
      c.paths += c.plan.n;
      c.exhausted += sample.budget_exhausted;
      for (std::size_t b = 0; b < layout.size(); ++b) {
        c.table.add({eps, t, w.descriptor, static_cast<long long>(b), sample.measure.mass()[b], pred.mass()[b]});
      }
      json masses = json::array();
      for (int k = 0; k < m; ++k) masses.push_back(sample.measure.boundary_mass(k));
      rows.push_back({{"eps", eps}, {"t", t}, {"window", w.descriptor},
                      {"tv", measure_distance(sample.measure, pred).tv}, {"boundary_mass", masses},
                      {"interior_mass", sample.measure.interior_mass()}, {"absorbed", sample.absorbed}});
    }
  }
  c.results["grid"] = rows;
}

void run_mu(Context& c) {
  c.table.header = {"bin", "x_lo", "y_lo", "x_hi", "y_hi", "occupation"};
  MuOptions mo;
  mo.T = c.plan.T;
  mo.burn_in = c.plan.burn_in;
  mo.paths = c.plan.n;
  mo.bins = c.plan.bins;
  const auto est = estimate_mu(c.model, c.sim(c.plan.eps.front()), c.sols, *c.plan.x, mo, c.options("mu"));
  const auto& L = est.occupation.layout();
  const double hx = (L.hi.x - L.lo.x) / L.nx, hy = (L.hi.y - L.lo.y) / L.ny;
  for (int j = 0; j < L.ny; ++j) {
    for (int i = 0; i < L.nx; ++i) {
      const std::size_t b = static_cast<std::size_t>(j) * L.nx + i;
      c.table.add({static_cast<long long>(b), L.lo.x + i * hx, L.lo.y + j * hy, L.lo.x + (i + 1) * hx,
                   L.lo.y + (j + 1) * hy, est.occupation.mass()[b]});
    }
  }
  c.paths += c.plan.n;
  c.exhausted += est.budget_exhausted;
}

void run_homogenize(Context& c, const std::string& out_dir) {
  c.table.header = {"from", "to", "shift_i", "shift_j", "prob"};
  RenewalWalkModel walk;
  if (!c.plan.kernel_file.empty()) {
    std::ifstream in(c.plan.kernel_file);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read kernel file '" + c.plan.kernel_file + "'");
    walk = walk_from_json(json::parse(in));
  } else {
    RenewalBuildOptions bo;
    bo.eps = c.plan.eps;
    bo.n = c.plan.n;
    bo.radius = c.plan.radius;
    walk = build_renewal_model(c.model, c.plan.sim, c.sols, bo, c.options("homogenize/kernel"));
    c.paths += c.plan.n * c.plan.eps.size() * static_cast<std::uint64_t>(walk.types());
    c.exhausted += walk.budget_exhausted;
  }
  for (int k = 0; k < walk.types(); ++k) {
    for (const auto& e : walk.rows[k]) {
      c.table.add({k + 1LL, e.to + 1LL, static_cast<long long>(e.shift.i), static_cast<long long>(e.shift.j), e.prob});
    }
  }
  write_file((fs::path(out_dir) / "kernel.json").string(), render_json(walk_to_json(walk)));
  const auto eff = effective_diffusion(walk);
  c.results["effective"] = effective_to_json(eff);
  const auto bm = walk_batch_means(walk, c.plan.walk_steps, 1000, grid_seed(c.seed, "homogenize/batch"));
  c.results["walk"] = {{"steps", bm.steps}, {"a", {bm.a.x, bm.a.y}}, {"a_stderr", {bm.a_stderr.x, bm.a_stderr.y}},
                       {"B", mat2_json(bm.B)}, {"B_stderr", mat2_json(bm.B_stderr)}};
  if (c.plan.walks > 0) {
    const auto t = endpoint_normality(walk, eff, c.plan.walks, 100'000, c.options("homogenize/endpoints"));
    c.results["endpoints"] = {{"walks", c.plan.walks},  {"steps", 100'000},         {"ad_x", t.ad_x},
                              {"ad_y", t.ad_y},         {"normal_x", t.normal_x},   {"normal_y", t.normal_y},
                              {"mean_drift", {t.mean_drift.x, t.mean_drift.y}}};
  }
}

}  // namespace

const char* version_string() { return DEGENFLOW_VERSION; }

std::uint64_t grid_seed(std::uint64_t master, const std::string& label) {
  return hash_combine(master, hash_label(label));
}

json spectral_to_json(const SpectralSolution& sol) {
  json curve = json::array();
  for (const auto& [g, l] : sol.lambda_curve) curve.push_back({g, l});
  return {{"n", sol.n},           {"gamma", sol.gamma},       {"lambda", sol.lambda},
          {"alpha_bar", sol.alpha_bar}, {"beta_bar", sol.beta_bar}, {"residual", sol.residual},
          {"phi", sol.phi},       {"pi", sol.pi},             {"psi", sol.psi},
          {"lambda_curve", curve}};
}

json walk_to_json(const RenewalWalkModel& walk) {
  json rows = json::array();
  for (const auto& row : walk.rows) {
    json r = json::array();
    for (const auto& e : row) r.push_back({{"shift", {e.shift.i, e.shift.j}}, {"to", e.to + 1}, {"prob", e.prob}});
    rows.push_back(r);
  }
  json j = {{"rows", rows}, {"c", walk.c}, {"radius", walk.radius}};
  if (!walk.gamma.empty()) j["gamma"] = walk.gamma;
  if (!walk.tail.empty()) j["tail"] = walk.tail;
  if (!walk.row_counts.empty()) j["row_counts"] = walk.row_counts;
  json fits = json::array();
  for (const auto& f : walk.time_fits) fits.push_back({{"slope", f.slope}, {"intercept", f.intercept}});
  if (!fits.empty()) j["time_fits"] = fits;
  return j;
}

RenewalWalkModel walk_from_json(const json& j) {
  RenewalWalkModel w;
  try {
    for (const auto& r : j.at("rows")) {
      std::vector<KernelEntry> row;
      for (const auto& e : r) {
        const auto& s = e.at("shift");
        row.push_back({{s.at(0).get<int>(), s.at(1).get<int>()}, e.at("to").get<int>() - 1, e.at("prob").get<double>()});
      }
      w.rows.push_back(row);
    }
    w.c = j.at("c").get<std::vector<double>>();
    if (j.contains("gamma")) w.gamma = j["gamma"].get<std::vector<double>>();
    if (j.contains("row_counts")) w.row_counts = j["row_counts"].get<std::vector<std::uint64_t>>();
    if (j.contains("radius")) w.radius = j["radius"].get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed kernel: ") + e.what());
  }
  w.validate();
  return w;
}

json effective_to_json(const EffectiveCoefficients& eff) {
  json j = {{"a", {eff.a.x, eff.a.y}},
            {"B", mat2_json(eff.B)},
            {"gamma", eff.gamma},
            {"mean_time", eff.mean_time},
            {"step_covariance", mat2_json(eff.step_covariance)},
            {"pi", std::vector<double>(eff.pi.data(), eff.pi.data() + eff.pi.size())}};
  if (eff.a_stderr) j["a_stderr"] = {eff.a_stderr->x, eff.a_stderr->y};
  return j;
}

RunResult run_experiment(const ExperimentPlan& plan, const RunSettings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  res.out_dir = settings.out_dir.empty() ? plan.out_dir : settings.out_dir;
  const std::uint64_t seed = settings.seed.value_or(plan.seed);
  json summary = {{"version", version_string()},
                  {"kind", to_string(plan.kind)},
                  {"name", plan.name},
                  {"model_hash", hex_hash(plan.model_hash)},
                  {"seed", seed},
                  {"threads", settings.threads}};
  try {
    fs::create_directories(res.out_dir);
  } catch (const fs::filesystem_error& e) {
    res.exit_code = 1;
    res.error = e.what();
    return res;
  }
  try {
    const Model model = plan.model.build();
    std::vector<SpectralSolution> sols;
    for (int k = 0; k < model.boundary_count(); ++k) sols.push_back(solve_gamma(model.coefficients(k), plan.spectral_n));
    if (plan.dump_spectral) {
      for (int k = 0; k < model.boundary_count(); ++k) {
        write_file((fs::path(res.out_dir) / ("spectral_" + std::to_string(k + 1) + ".json")).string(),
                   render_json(spectral_to_json(sols[k])));
      }
    }
    json spectral = json::array();
    for (int k = 0; k < model.boundary_count(); ++k) {
      spectral.push_back({{"boundary", k + 1}, {"gamma", sols[k].gamma}, {"lambda", sols[k].lambda}});
    }
    summary["spectral"] = spectral;

    Context c{plan, model, sols, seed, settings.threads, {}, json::object(), 0, 0};
    switch (plan.kind) {
      case ExperimentKind::Spectral: run_spectral(c); break;
      case ExperimentKind::ExitProb: run_exitprob(c); break;
      case ExperimentKind::ExitTime: run_exittime(c); break;
      case ExperimentKind::HitMeasure: run_hitmeasure(c); break;
      case ExperimentKind::Transition: run_transition(c); break;
      case ExperimentKind::Metastable: run_metastable(c); break;
      case ExperimentKind::Mu: run_mu(c); break;
      case ExperimentKind::Homogenize: run_homogenize(c, res.out_dir); break;
    }
    write_file((fs::path(res.out_dir) / "results.csv").string(), c.table.render());
    res.total_paths = c.paths;
    res.budget_exhausted = c.exhausted;
    summary["results"] = c.results;
    summary["status"] = "ok";
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.error = e.what();
    summary["status"] = "error";
    summary["error"] = e.what();
  }
  const double frac = res.total_paths ? static_cast<double>(res.budget_exhausted) / res.total_paths : 0.0;
  if (res.exit_code == 0 && frac > 0.01) res.exit_code = 2;
  summary["total_paths"] = res.total_paths;
  summary["budget_exhausted"] = res.budget_exhausted;
  summary["budget_exhausted_fraction"] = frac;
  summary["exit_code"] = res.exit_code;
  summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.summary = summary;
  try {
    write_file((fs::path(res.out_dir) / "summary.json").string(), render_json(summary));
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.error = e.what();
  }
  return res;
}

}  // namespace degenflow::cli
