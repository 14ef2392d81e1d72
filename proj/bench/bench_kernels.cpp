// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "doob/batch_loss.hpp"
#include "doob/metrics.hpp"
#include "doob/sampler.hpp"

namespace {

using namespace doob;

BridgeModel mb_model(std::size_t K) {
  BoundaryPair bc;
  bc.A = {-0.558224, 1.441726};
  bc.B = {0.623499, 0.028038};
  bc.T = 0.0275;
  BackendSpec spec;
  MixtureSpec mix;
  mix.K = K;
  Rng rng(1);
  return BridgeModel::create(bc, std::vector<double>{5.0, 5.0}, spec, mix, rng);
}

void BM_BatchLoss(benchmark::State& state, bool parallel) {
  const auto model = mb_model(1);
  const auto dyn = first_order_toy(mueller_brown(), 5.0);
  Rng rng(2);
  const auto draws = draw_batch(model, static_cast<std::size_t>(state.range(0)), 0.5e-4, rng);
  for (auto _ : state) {
    auto r = parallel ? batch_loss_parallel(model, dyn, draws, 32) : batch_loss_serial(model, dyn, draws);
    benchmark::DoNotOptimize(r.mean_loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_BatchLoss, serial, false)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_BatchLoss, parallel, true)->Arg(512)->Unit(benchmark::kMillisecond);

PointSet cloud(std::size_t n, double shift, Rng& rng) {
  PointSet p;
  std::vector<double> x(2);
  for (std::size_t i = 0; i < n; ++i) {
    x[0] = shift + standard_normal(rng);
    x[1] = standard_normal(rng);
    p.push(x);
  }
  return p;
}

void BM_CostMatrix(benchmark::State& state, bool parallel) {
  Rng rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = cloud(n, 0.0, rng), q = cloud(n, 0.5, rng);
  for (auto _ : state) {
    auto c = parallel ? cost_matrix_parallel(p, q) : cost_matrix_serial(p, q);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK_CAPTURE(BM_CostMatrix, serial, false)->Arg(500)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_CostMatrix, parallel, true)->Arg(500)->Unit(benchmark::kMicrosecond);

void BM_Ensemble(benchmark::State& state, bool parallel) {
  const auto model = mb_model(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto e = parallel ? generate_ensemble(model, n, 275, 4) : generate_ensemble_serial(model, n, 275, 4);
    benchmark::DoNotOptimize(e.paths.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_Ensemble, serial, false)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Ensemble, parallel, true)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
