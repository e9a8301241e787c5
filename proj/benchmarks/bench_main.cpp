#include <benchmark/benchmark.h>

#include "slowvol/dynamics.hpp"
#include "slowvol/expansion.hpp"
#include "slowvol/merton.hpp"
#include "slowvol/montecarlo.hpp"
#include "slowvol/riccati.hpp"
#include "slowvol/rng.hpp"

using namespace slowvol;

namespace {

SharpeContext ctx() {
  SharpeContext c;
  c.lambda = 0.5;
  c.sigma = 1.0;
  c.horizon_T = 1.0;
  return c;
}

UtilitySpec imm() { return InverseMarginalMeasure{{1.0, 2.0}, {0.5, 0.5}, 2.0}; }

void BM_normal_pair(benchmark::State& state) {
  std::uint64_t i = 0;
  for (auto _ : state) {
    NormalPair p = normal_pair(42, i++, 7, 0);
    benchmark::DoNotOptimize(p);
  }
  state.SetItemsProcessed(state.iterations() * 2);
}
BENCHMARK(BM_normal_pair);

void BM_solution_build_quadrature(benchmark::State& state) {
  auto n_gh = static_cast<int>(state.range(0));
  for (auto _ : state) {
    MertonSolution sol = make_merton_solution(imm(), ctx(), HRep::Quadrature, n_gh);
    benchmark::DoNotOptimize(sol);
  }
}
BENCHMARK(BM_solution_build_quadrature)->Arg(64)->Arg(128)->Arg(256);

void BM_heat_solve(benchmark::State& state) {
  MertonSolution sol = make_merton_solution(imm(), ctx(), HRep::Quadrature, 128);
  double x = 0.3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(heat_solve(sol, x, 0.25));
    x = x < 3.0 ? x + 0.1 : 0.3;
  }
}
BENCHMARK(BM_heat_solve);

void BM_heat_invert(benchmark::State& state) {
  MertonSolution sol = make_merton_solution(imm(), ctx(), HRep::Quadrature, 128);
  double y = heat_solve(sol, 1.0, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(heat_invert(sol, y, 0.25));
}
BENCHMARK(BM_heat_invert);

void BM_value_power_closed(benchmark::State& state) {
  MertonSolution sol = make_merton_solution(PowerUtility{0.5}, ctx(), HRep::Auto, 128);
  for (auto _ : state) benchmark::DoNotOptimize(merton_value(sol, 2.0, 0.25));
}
BENCHMARK(BM_value_power_closed);

void BM_first_order_term(benchmark::State& state) {
  MarketModel model = cir_model({0.3, 1.0, 0.5}, -0.5, 0.1);
  SlowFactorFrozen frozen = freeze(model, 1.0, 1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(v1_eval(frozen, PowerUtility{0.4}, 0.0, 1.0));
}
BENCHMARK(BM_first_order_term);

void BM_path_simulation(benchmark::State& state) {
  MarketModel model = cir_model({0.3, 1.0, 0.5}, -0.5, 0.1);
  StrategyFn pi0 = merton_reference_strategy(model, PowerUtility{0.4}, 1.0);
  PathConfig cfg;
  cfg.n_paths = state.range(0);
  cfg.n_steps = 64;
  cfg.seed = 1;
  cfg.threads = 1;
  for (auto _ : state) {
    SimResult r = simulate_paths(model, pi0, {0.0, 1.0, 1.0}, 1.0, cfg);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations() * cfg.n_paths * cfg.n_steps);
}
BENCHMARK(BM_path_simulation)->Arg(1024)->Arg(8192);

void BM_riccati_integrate(benchmark::State& state) {
  GMomentSpec spec{0.5, 0.5, 1.0, 0.1};
  for (auto _ : state) {
    RiccatiSolution sol = riccati_integrate(spec, 10.0);
    benchmark::DoNotOptimize(sol);
  }
}
BENCHMARK(BM_riccati_integrate);

}  // namespace

BENCHMARK_MAIN();
