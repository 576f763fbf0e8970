#include <benchmark/benchmark.h>

#include "baffle/dataset.hpp"
#include "baffle/defend.hpp"
#include "baffle/hashing.hpp"
#include "baffle/rng.hpp"
#include "baffle/train.hpp"

namespace {

using namespace baffle;

void BM_ChainWalkStep(benchmark::State& state) {
  Env env(chain_walk_spec(11, 1 << 20), 0);
  env.reset();
  SplitMix64 rng(1);
  for (auto _ : state) {
    if (env.done()) env.reset();
    benchmark::DoNotOptimize(env.step(static_cast<int>(rng.next_below(2))));
  }
}
BENCHMARK(BM_ChainWalkStep);

void BM_PatchGridStep(benchmark::State& state) {
  Env env(patch_grid_spec(1 << 20), 0);
  env.reset();
  SplitMix64 rng(1);
  for (auto _ : state) {
    if (env.done()) env.reset();
    benchmark::DoNotOptimize(env.step(static_cast<int>(rng.next_below(4))));
  }
}
BENCHMARK(BM_PatchGridStep);

Dataset bench_dataset(int episodes) {
  const EnvSpec spec = chain_walk_spec(11, 12);
  const auto policy = make_tabular_policy(spec, Objective::Maximize, 1.0);
  return collect(spec, *policy, episodes, 0.3, 7);
}

void BM_TrainStepFqi(benchmark::State& state) {
  const Dataset ds = bench_dataset(2000);
  TrainConfig cfg;
  cfg.algorithm = Algorithm::Fqi;
  cfg.batch_size = static_cast<int>(state.range(0));
  cfg.steps = 50;
  cfg.seed = 3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(ds, cfg));
  }
  state.SetItemsProcessed(state.iterations() * 50 * cfg.batch_size);
}
BENCHMARK(BM_TrainStepFqi)->Arg(64)->Arg(256);

void BM_ForwardImage(benchmark::State& state) {
  const ObsLayout layout = ObsLayout::image(12, 12, 1);
  const MlpModel model =
      MlpModel::make(layout, 4, MlpModel::default_hidden(layout), 1);
  Observation obs(layout.size(), 0.1f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(obs));
  }
}
BENCHMARK(BM_ForwardImage);

void BM_PcaProject(benchmark::State& state) {
  SplitMix64 rng(5);
  Eigen::MatrixXd acts(state.range(0), 64);
  for (Eigen::Index r = 0; r < acts.rows(); ++r) {
    for (Eigen::Index c = 0; c < 64; ++c) acts(r, c) = rng.next_double();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(pca_project(acts, 3));
  }
}
BENCHMARK(BM_PcaProject)->Arg(1000)->Arg(10000);

void BM_Kmeans(benchmark::State& state) {
  SplitMix64 rng(6);
  Eigen::MatrixXd pts(state.range(0), 3);
  for (Eigen::Index r = 0; r < pts.rows(); ++r) {
    for (Eigen::Index c = 0; c < 3; ++c) pts(r, c) = rng.next_double();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(kmeans(pts, 2, 10, 1));
  }
}
BENCHMARK(BM_Kmeans)->Arg(1000)->Arg(10000);

void BM_Sha256(benchmark::State& state) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(state.range(0)));
  SplitMix64 rng(7);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.next_u64());
  for (auto _ : state) {
    benchmark::DoNotOptimize(sha256_hex(bytes));
  }
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Sha256)->Arg(1 << 16)->Arg(1 << 22);

}  // namespace

BENCHMARK_MAIN();
