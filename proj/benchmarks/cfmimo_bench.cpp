// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "cfmimo/baselines.hpp"
#include "cfmimo/cnn.hpp"
#include "cfmimo/gnn.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/search.hpp"

using namespace cfmimo;

namespace {

SystemConfig desk() {
  SystemConfig c;
  c.I = 3;
  c.N = 4;
  c.M = 2;
  c.K = 3;
  return c;
}

struct Fixture {
  SystemConfig config;
  Realization real;
  std::vector<AntennaSubset> subsets;
  ApMatrices restricted;

  explicit Fixture(SystemConfig c, std::uint64_t seed = 7) : config(c) {
    RandomStream rng(seed);
    real = draw_realization(config, rng);
    subsets = random_selection(config, rng);
    restricted = restrict_to_subset(real.channels.h_hat, subsets);
  }
};

void BM_DrawRealization(benchmark::State& state) {
  const SystemConfig c;
  RandomStream rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(draw_realization(c, rng));
}
BENCHMARK(BM_DrawRealization);

void BM_Baseline(benchmark::State& state) {
  const Fixture f{SystemConfig{}};
  const auto kind = static_cast<PrecoderKind>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(assemble_baseline(kind, f.restricted, f.real.channels.err_var, f.subsets, f.config));
  }
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_Baseline)
    ->Arg(static_cast<int>(PrecoderKind::MRT))
    ->Arg(static_cast<int>(PrecoderKind::DistributedMMSE))
    ->Arg(static_cast<int>(PrecoderKind::CentralizedMMSE));

void BM_EvaluateStack(benchmark::State& state) {
  const Fixture f{SystemConfig{}};
  const auto stack = assemble_baseline(PrecoderKind::MRT, f.restricted, f.real.channels.err_var, f.subsets, f.config);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_stack(f.restricted, f.real.channels.err_var, stack, f.config));
}
BENCHMARK(BM_EvaluateStack);

void BM_IterativeSearch(benchmark::State& state) {
  const Fixture f{state.range(0) ? SystemConfig{} : desk()};
  const BaselineOracle oracle(PrecoderKind::CentralizedMMSE);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iterative_search(f.real.channels.h_hat, f.real.channels.err_var, oracle, f.config));
  }
}
BENCHMARK(BM_IterativeSearch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GnnInference(benchmark::State& state) {
  const Fixture f{SystemConfig{}};
  const GnnModel model(f.config, GnnArch{}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.infer_precoding(0, f.restricted[0], f.config.p_max_mw()));
  }
}
BENCHMARK(BM_GnnInference)->Unit(benchmark::kMicrosecond);

void BM_CnnInference(benchmark::State& state) {
  const Fixture f{SystemConfig{}};
  const CnnModel model(f.config, CnnArch{}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(0, f.real.channels.h_hat[0]));
}
BENCHMARK(BM_CnnInference)->Unit(benchmark::kMicrosecond);

void BM_GnnTrainingStep(benchmark::State& state) {
  const SystemConfig c = desk();
  GnnModel model(c, GnnArch{}, 5);
  RandomStream rng(6);
  const auto batch = sample_gnn_batch(c, model.input_scale(), 32, rng);
  for (auto _ : state) {
    ad::Tape tape;
    const auto loss = model.loss(tape, batch, c);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.value(loss)[0]);
  }
}
BENCHMARK(BM_GnnTrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
