#include <benchmark/benchmark.h>

#include "cseg/session.hpp"
#include "cseg/synth.hpp"

namespace {

// One full round (split, unaries, warm start, solve, render) on a small scene.
void run_round(benchmark::State& state, cseg::Algorithm algo) {
  cseg::SynthConfig synth;
  synth.width = static_cast<int>(state.range(0));
  synth.height = synth.width;
  synth.objects = 1;
  synth.seed = 4;
  const auto f = cseg::make_fixture(synth);
  cseg::SessionConfig cfg;
  cfg.algorithm = algo;
  for (auto _ : state) {
    cseg::Session s(f.inputs, cfg);
    const auto& r = s.run_round(f.scribbles);
    benchmark::DoNotOptimize(r.labels.data());
    state.counters["nodes"] = static_cast<double>(r.node_count);
    state.counters["cuts"] = static_cast<double>(r.cuts);
  }
}

void BM_RoundIlpU(benchmark::State& state) { run_round(state, cseg::Algorithm::IlpU); }
void BM_RoundIlpP(benchmark::State& state) { run_round(state, cseg::Algorithm::IlpP); }
void BM_RoundL0H(benchmark::State& state) { run_round(state, cseg::Algorithm::L0H); }

BENCHMARK(BM_RoundL0H)->Arg(16)->Arg(24)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RoundIlpU)->Arg(16)->Arg(24)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RoundIlpP)->Arg(16)->Arg(24)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
