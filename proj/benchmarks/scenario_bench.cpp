#include <benchmark/benchmark.h>

#include "mcast/experiment/experiment.hpp"

namespace {

using namespace mcast;

// Wall-clock cost of ten virtual seconds on the built-in topology.
void BM_PaperScenario(benchmark::State& state) {
  exp::ScenarioConfig cfg;
  cfg.max_trees = static_cast<unsigned>(state.range(0));
  cfg.block_bytes = 400'000'000;
  cfg.duration = sim::SimTime::from_seconds(10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(exp::run_scenario(cfg));
  }
}
BENCHMARK(BM_PaperScenario)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
