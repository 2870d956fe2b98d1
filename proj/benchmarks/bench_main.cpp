#include <benchmark/benchmark.h>

#include "skpo/mc_lab.hpp"
#include "skpo/oracle.hpp"
#include "skpo/rollout.hpp"

using namespace skpo;

namespace {

const ChainProblem& bench_problem() {
  static ChainProblem p(1, 10, 10);
  return p;
}

void BM_OracleDP(benchmark::State& state) {
  const ChainProblem& p = bench_problem();
  PolicyParams policy;
  for (auto _ : state) {
    SuccessOracle oracle(p, policy);
    benchmark::DoNotOptimize(oracle.prob(initial_state(p)));
  }
}
BENCHMARK(BM_OracleDP);

void BM_SinglePassRollout(benchmark::State& state) {
  const ChainProblem& p = bench_problem();
  PolicyParams policy;
  LengthTracker lengths;
  uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_single_pass(p, policy, 8, lengths, ++seed));
  }
}
BENCHMARK(BM_SinglePassRollout);

void BM_SignTrialBatch(benchmark::State& state) {
  SignExperimentConfig cfg;
  cfg.trials = 1000;
  uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sign_accuracy_experiment(cfg, ++seed));
  }
  state.SetItemsProcessed(state.iterations() * cfg.trials);
}
BENCHMARK(BM_SignTrialBatch);

}  // namespace

BENCHMARK_MAIN();
