#include <benchmark/benchmark.h>

#include "cseg/metrics.hpp"
#include "cseg/synth.hpp"

namespace {

void BM_Evaluate(benchmark::State& state) {
  cseg::SynthConfig cfg;
  cfg.width = static_cast<int>(state.range(0));
  cfg.height = cfg.width;
  cfg.objects = 6;
  cfg.seed = 9;
  const auto f = cseg::make_fixture(cfg);
  const auto& truth = *f.inputs.truth;
  // Score the truth's class map against itself with a shifted instance map.
  std::vector<std::uint32_t> inst(truth.instance_ids.begin(), truth.instance_ids.end());
  for (auto& v : inst) v = v == 0 ? 0 : v + 1;
  for (auto _ : state) {
    auto rep = cseg::evaluate(truth.class_ids, std::span<const std::uint32_t>(inst), truth);
    benchmark::DoNotOptimize(rep.semantic.mean);
  }
  state.SetComplexityN(state.range(0) * state.range(0));
}
BENCHMARK(BM_Evaluate)->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oN)->Unit(benchmark::kMicrosecond);

}  // namespace
