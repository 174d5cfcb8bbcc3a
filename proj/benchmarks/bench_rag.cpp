#include <benchmark/benchmark.h>

#include "cseg/rag.hpp"
#include "cseg/synth.hpp"

namespace {

cseg::SynthFixture fixture_of_side(int side) {
  cseg::SynthConfig cfg;
  cfg.width = side;
  cfg.height = side;
  cfg.objects = 4;
  cfg.seed = 5;
  return cseg::make_fixture(cfg);
}

void BM_BuildRag(benchmark::State& state) {
  const auto f = fixture_of_side(static_cast<int>(state.range(0)));
  const auto features = cseg::FeatureView::of(f.inputs.image);
  for (auto _ : state) {
    auto g = cseg::build_rag(*f.inputs.superpixels, features);
    benchmark::DoNotOptimize(g.edges().data());
  }
  state.SetComplexityN(state.range(0) * state.range(0));
}
BENCHMARK(BM_BuildRag)->RangeMultiplier(2)->Range(64, 512)->Complexity(benchmark::oN)->Unit(benchmark::kMillisecond);

void BM_SplitByScribbles(benchmark::State& state) {
  const auto f = fixture_of_side(static_cast<int>(state.range(0)));
  const auto features = cseg::FeatureView::of(*f.inputs.probabilities);
  for (auto _ : state) {
    auto split = cseg::split_by_scribbles(*f.inputs.superpixels, f.scribbles, features);
    benchmark::DoNotOptimize(split.graph.edges().data());
  }
}
BENCHMARK(BM_SplitByScribbles)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMillisecond);

}  // namespace
