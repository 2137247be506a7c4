#include <benchmark/benchmark.h>

#include <random>

#include "cfl/asyncsim.hpp"
#include "cfl/data.hpp"
#include "cfl/incentive.hpp"
#include "cfl/model.hpp"

namespace {

cfl::Dataset blobs(std::size_t count) {
  cfl::SyntheticSpec spec;
  spec.count = count;
  spec.seed = 1;
  return cfl::make_synthetic_blobs(spec);
}

void BM_SgdStep(benchmark::State& state) {
  const auto ds = blobs(static_cast<std::size_t>(state.range(0)));
  const cfl::Batch batch{ds.features, ds.labels};
  auto model = cfl::Model::glorot_uniform({ds.dim(), 64, 32, 10}, 2);
  for (auto _ : state) {
    model = cfl::sgd_step(model, batch, 0.01);
    benchmark::DoNotOptimize(model.params().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SgdStep)->Arg(20)->Arg(200);

void BM_SolveContract(benchmark::State& state) {
  const auto market = cfl::MarketModel::uniform(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cfl::solve_contract(market, cfl::AccuracyCurveParams{}));
}
BENCHMARK(BM_SolveContract)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_AccessControl(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> q(0.5, 0.3);
  std::vector<cfl::Upload> uploads(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < uploads.size(); ++i) uploads[i] = {i, static_cast<int>(1 + i % 10), q(rng)};
  for (auto _ : state) benchmark::DoNotOptimize(cfl::access_control(uploads, 0.5, 3.0));
}
BENCHMARK(BM_AccessControl)->Arg(100)->Arg(1000);

void BM_Partition(benchmark::State& state) {
  const auto ds = blobs(20000);
  cfl::PartitionSpec spec;
  spec.num_clients = static_cast<std::size_t>(state.range(0));
  spec.seed = 4;
  for (auto _ : state) benchmark::DoNotOptimize(cfl::partition(ds, spec));
}
BENCHMARK(BM_Partition)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
