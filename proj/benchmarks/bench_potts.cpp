#include <benchmark/benchmark.h>

#include "cseg/potts_heur.hpp"
#include "cseg/rag.hpp"
#include "cseg/synth.hpp"

namespace {

cseg::SynthFixture fixture_of_side(int side) {
  cseg::SynthConfig cfg;
  cfg.width = side;
  cfg.height = side;
  cfg.objects = 4;
  cfg.seed = 3;
  return cseg::make_fixture(cfg);
}

void BM_L0H(benchmark::State& state) {
  const auto f = fixture_of_side(static_cast<int>(state.range(0)));
  const auto split = cseg::split_by_scribbles(*f.inputs.superpixels, f.scribbles,
                                              cseg::FeatureView::of(*f.inputs.probabilities));
  for (auto _ : state) {
    auto res = cseg::run(split.graph, split.superpixels, f.scribbles, {0.3, 1000});
    benchmark::DoNotOptimize(res.labels.data());
  }
  state.SetComplexityN(split.graph.node_count());
  state.counters["nodes"] = split.graph.node_count();
}
BENCHMARK(BM_L0H)->RangeMultiplier(2)->Range(64, 512)->Complexity(benchmark::oN)->Unit(benchmark::kMillisecond);

void BM_BetaSchedule(benchmark::State& state) {
  int iter = 0;
  for (auto _ : state) benchmark::DoNotOptimize(cseg::beta_schedule(1 + iter++ % 50, 0.3));
}
BENCHMARK(BM_BetaSchedule);

}  // namespace
