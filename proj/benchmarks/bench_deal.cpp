#include <benchmark/benchmark.h>

#include "deal/linop.hpp"
#include "deal/maskgen.hpp"
#include "deal/model.hpp"
#include "deal/multiconv.hpp"
#include "deal/solver.hpp"
#include "deal/synthetic.hpp"
#include "deal/train.hpp"

using namespace deal;

namespace {

DealModel bench_model(int filters) {
  ModelConfig c;
  c.num_filters = filters;
  c.seed = 1;
  return DealModel::initialize(c);
}

}  // namespace

static void BM_MultiConvDirect(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const MultiConv w = MultiConv::random(1, 8, 9, 1);
  const Image x = piecewise_constant(1, n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(w.forward(x));
  state.SetComplexityN(n * n);
}
BENCHMARK(BM_MultiConvDirect)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_MultiConvFft(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const MultiConv w = MultiConv::random(1, 8, 9, 1);
  const MultiConvPlan plan(w, n, n);
  const Image x = piecewise_constant(1, n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(plan.forward(x));
  state.SetComplexityN(n * n);
}
BENCHMARK(BM_MultiConvFft)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_MaskCompute(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const DealModel m = bench_model(8);
  const Image x = add_noise(piecewise_constant(1, n, n, 3), 25.0, 4);
  for (auto _ : state) benchmark::DoNotOptimize(mask_compute(m.mask, x, 25.0));
}
BENCHMARK(BM_MaskCompute)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_CgSolve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const DealModel m = bench_model(8);
  const ForwardOperator h = make_operator(OperatorSpec{}, Shape{1, n, n});
  const DealSolver solver(m, h);
  const Measurement y = add_noise(piecewise_constant(1, n, n, 5), 25.0, 6);
  const Mask mask = solver.mask_at(y, 25.0);
  int iters = 0;
  for (auto _ : state) {
    Image x = y;
    iters = solver.solve(mask, 10.0, y, x, {1e-8, 1000}).iterations;
    benchmark::DoNotOptimize(x);
  }
  state.counters["cg_iters"] = iters;
}
BENCHMARK(BM_CgSolve)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_Reconstruct(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const DealModel m = bench_model(8);
  const ForwardOperator h = make_operator(OperatorSpec{}, Shape{1, n, n});
  const Measurement y = add_noise(piecewise_constant(1, n, n, 7), 25.0, 8);
  SolveConfig cfg;
  cfg.k_out = 20;
  for (auto _ : state) {
    SolveReport report;
    benchmark::DoNotOptimize(deal_reconstruct(m, h, y, 25.0, cfg, report));
  }
}
BENCHMARK(BM_Reconstruct)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  const DealModel m = bench_model(8);
  const auto data = piecewise_constant_set(4, 1, 64, 9);
  TrainConfig cfg;
  cfg.phases = {{1, 1e-4, 1e-4}};
  cfg.k_out_min = 5;
  cfg.k_out_max = 5;
  for (auto _ : state) benchmark::DoNotOptimize(train(m, data, {}, cfg));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
