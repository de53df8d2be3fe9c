#include <benchmark/benchmark.h>

#include "mcast/routing/tree.hpp"

namespace {

using namespace mcast;

routing::ReceiverSet paper_receivers(const topo::Topology& t) {
  return {t.at("r1"), t.at("r2"), t.at("r3")};
}

void BM_ComputeTreeSet(benchmark::State& state) {
  const topo::Topology t = topo::paper_topology();
  const auto rx = paper_receivers(t);
  const auto k = static_cast<unsigned>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(routing::compute_tree_set(t, t.at("s"), rx, k));
  }
}
BENCHMARK(BM_ComputeTreeSet)->Arg(1)->Arg(3);

void BM_BruteForcePack(benchmark::State& state) {
  const topo::Topology t = topo::paper_topology();
  const auto rx = paper_receivers(t);
  for (auto _ : state) {
    benchmark::DoNotOptimize(routing::brute_force_pack(t, t.at("s"), rx));
  }
}
BENCHMARK(BM_BruteForcePack)->Unit(benchmark::kMillisecond);

}  // namespace
