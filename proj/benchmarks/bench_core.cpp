#include <benchmark/benchmark.h>

#include <random>

#include "goldnas/flops_model.hpp"
#include "goldnas/search_space.hpp"
#include "goldnas/supernet.hpp"

using namespace goldnas;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = n(rng);
  return t;
}

NetworkShapeConfig desk_shape() {
  NetworkShapeConfig s;
  s.num_classes = 4;
  s.reduction_cells = {1};
  return s;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const std::size_t c = static_cast<std::size_t>(state.range(0));
  const std::size_t groups = state.range(1) ? c : 1;
  Parameter x("x", random_tensor({16, c, 16, 16}, 1));
  Parameter k("k", random_tensor({c, c / groups, 3, 3}, 2));
  for (auto _ : state) {
    Tape tape;
    Var y = conv2d(tape.leaf(x), tape.leaf(k), {1, 1, groups});
    tape.backward(sum(y));
    benchmark::DoNotOptimize(k.grad[0]);
  }
  state.SetLabel(groups == 1 ? "dense" : "depthwise");
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({8, 0})->Args({16, 0})->Args({16, 1})->Args({32, 1})->Unit(benchmark::kMillisecond);

void BM_SupernetStep(benchmark::State& state) {
  const NetworkShapeConfig shape = desk_shape();
  SuperNetwork net = SuperNetwork::build(shape, 1);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Batch batch{random_tensor({n, 3, 16, 16}, 3), std::vector<int>(n, 1)};
  const OptimizerConfig opt;
  for (auto _ : state) {
    const StepReport r = one_level_step(net, batch, opt, {1e-7, 1.0});
    benchmark::DoNotOptimize(r.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_SupernetStep)->Arg(32)->Arg(96)->Unit(benchmark::kMillisecond);

void BM_ExpectedFlopsGradient(benchmark::State& state) {
  NetworkShapeConfig shape;
  shape.num_cells = 14;
  shape.nodes_per_cell = 6;
  shape.reduction_cells = NetworkShapeConfig::default_reductions(14);
  const FlopsBreakdown b = flops_breakdown(shape);
  const FlopsRegularizer reg(b);
  GateParams p;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < b.gates.size(); ++i) {
    p.alpha.push_back(n(rng));
    p.active.push_back(true);
  }
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(reg.expected(p, &grad));
}
BENCHMARK(BM_ExpectedFlopsGradient);

void BM_CountSpace(benchmark::State& state) {
  NetworkShapeConfig shape;
  shape.num_cells = static_cast<std::size_t>(state.range(0));
  shape.nodes_per_cell = 6;
  shape.reduction_cells = NetworkShapeConfig::default_reductions(shape.num_cells);
  for (auto _ : state) benchmark::DoNotOptimize(count_space(shape).exact);
}
BENCHMARK(BM_CountSpace)->Arg(14)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
