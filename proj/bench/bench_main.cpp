// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include "rcac/consensus.hpp"
#include "rcac/harness.hpp"

namespace {

// A complete graph passes the check, so every subset pair is visited.
void BM_RobustnessParallel(benchmark::State& state) {
  const auto g = rcac::CommGraph::complete(static_cast<std::size_t>(state.range(0)));
  const std::size_t zeta = (g.n_nodes() + 1) / 2;
  for (auto _ : state) benchmark::DoNotOptimize(rcac::is_zeta_robust(g, zeta));
}

void BM_RobustnessSerial(benchmark::State& state) {
  const auto g = rcac::CommGraph::complete(static_cast<std::size_t>(state.range(0)));
  const std::size_t zeta = (g.n_nodes() + 1) / 2;
  for (auto _ : state) benchmark::DoNotOptimize(rcac::is_zeta_robust_serial(g, zeta));
}

BENCHMARK(BM_RobustnessParallel)->DenseRange(8, 12, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RobustnessSerial)->DenseRange(8, 12, 2)->Unit(benchmark::kMillisecond);

rcac::TrainConfig deep_config() {
  rcac::TrainConfig c;
  c.algorithm = rcac::Algorithm::Alg3;
  c.environment.width = 6;
  c.environment.height = 6;
  c.environment.n_agents = 5;
  c.n_agents = 5;
  c.H = 1;
  c.gamma = 0.9;
  c.alpha_v = rcac::Schedule::constant(0.01);
  c.alpha_lambda = rcac::Schedule::constant(0.01);
  c.alpha_theta = rcac::Schedule::constant(0.002);
  c.episodes = 3;
  c.steps_per_episode = 20;
  c.epochs_per_episode = 5;
  c.eval_every = 0;
  c.seed = 1;
  return c;
}

void BM_DeepTraining(benchmark::State& state) {
  auto c = deep_config();
  c.parallel_agents = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(rcac::run_training(c));
  state.SetLabel(c.parallel_agents ? "parallel agents" : "serial agents");
}

BENCHMARK(BM_DeepTraining)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Sweep(benchmark::State& state) {
  const auto c = deep_config();
  const bool parallel = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(rcac::run_sweep(c, {1, 2, 3, 4}, parallel));
  state.SetLabel(parallel ? "parallel seeds" : "serial seeds");
}

BENCHMARK(BM_Sweep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
