#include <benchmark/benchmark.h>

#include "degenflow/homogenization.hpp"
#include "degenflow/sde.hpp"
#include "degenflow/spectral.hpp"

using namespace degenflow;

namespace {

Model layer_cylinder() {
  std::vector<BoundarySpec> b(2);
  b[0].coefficients.rho = FourierSeries(0.01);
  InteriorSpec in;
  in.delta = 2.0;
  in.height = 5.0;
  return Model::build(GeometryKind::Cylinder, b, in);
}

void BM_SolveGamma(benchmark::State& state) {
  BoundaryCoefficients bc;
  bc.alpha = FourierSeries({1.0, 0.3});
  bc.beta = FourierSeries({0.5}, {0.0, 0.2});
  bc.a = FourierSeries({1.0, 0.2});
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(solve_gamma(bc, n).gamma);
}
BENCHMARK(BM_SolveGamma)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_StepByChart(benchmark::State& state) {
  const auto model = layer_cylinder();
  SimConfig cfg;
  cfg.eps = 1e-3;
  Simulator sim(model, cfg);
  const double z0[] = {2.5, 1.5, 0.05, 5e-3};
  const auto start = state.range(0) == 0 ? state_at(model, {1.0, z0[0]}, cfg)
                                         : state_on_tube(model, 0, 1.0, z0[state.range(0)], cfg);
  PathRng rng(1);
  PathState s = start;
  for (auto _ : state) {
    sim.step(s, rng);
    if (s.chart != start.chart) s = start;
  }
  state.SetLabel(to_string(start.chart));
}
BENCHMARK(BM_StepByChart)->DenseRange(0, 3);

void BM_FirstHitLayer(benchmark::State& state) {
  const auto model = layer_cylinder();
  SimConfig cfg;
  cfg.eps = 1e-3;
  cfg.max_time = 1e4;
  Simulator sim(model, cfg);
  const auto sol = solve_gamma(model.coefficients(0), 64);
  const LevelSet lv = gamma_level_set(model, 0, 0.3, sol);
  const std::vector<Target> targets{Target::surface(0), Target::level_set(lv)};
  std::uint64_t i = 0;
  for (auto _ : state) {
    auto rng = derive_path_rng(7, i++);
    benchmark::DoNotOptimize(sim.first_hit(state_on_tube(model, 0, 0.0, 0.05, cfg), targets, rng).time);
  }
}
BENCHMARK(BM_FirstHitLayer)->Unit(benchmark::kMicrosecond);

void BM_WalkRenewals(benchmark::State& state) {
  RenewalWalkModel walk;
  walk.rows = {{{{1, 0}, 0, 0.25}, {{-1, 0}, 0, 0.25}, {{0, 1}, 1, 0.25}, {{0, -1}, 1, 0.25}},
               {{{1, 0}, 0, 0.5}, {{0, 0}, 1, 0.5}}};
  walk.c = {1.0, 2.0};
  const WalkSampler sampler(walk);
  PathRng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(sampler.run(0, 1000, rng).time);
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_WalkRenewals);

void BM_EffectiveDiffusion(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  RenewalWalkModel walk;
  walk.rows.resize(m);
  walk.c.assign(m, 1.0);
  for (int k = 0; k < m; ++k) {
    for (int to = 0; to < m; ++to) {
      walk.rows[k].push_back({{1, 0}, to, 0.4 / m});
      walk.rows[k].push_back({{-1, 0}, to, 0.2 / m});
      walk.rows[k].push_back({{0, 1}, to, 0.2 / m});
      walk.rows[k].push_back({{0, -1}, to, 0.2 / m});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(effective_diffusion(walk).B.xx);
}
BENCHMARK(BM_EffectiveDiffusion)->Arg(2)->Arg(8)->Arg(32);

}  // namespace
BENCHMARK_MAIN();
