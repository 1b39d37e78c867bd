#include <benchmark/benchmark.h>

#include <vector>

#include "gbu/data/synth.hpp"
#include "gbu/gate/gate_map.hpp"
#include "gbu/model/model.hpp"
#include "gbu/train/trainer.hpp"

using namespace gbu;

namespace {

std::vector<data::Record> nights(std::size_t count, std::size_t seconds) {
  auto profile = data::default_profile();
  profile.subjects = count;
  profile.night_seconds = seconds;
  return data::synth_generate(profile);
}

// arg: night length in seconds
void BM_ForwardSmall(benchmark::State& state) {
  const auto config = model::small_config(model::Variant::kGated);
  const auto m = model::build_model<float>(config, 1);
  const auto record = nights(1, static_cast<std::size_t>(state.range(0))).front();
  const auto x = model::make_input<float>(config, data::model_breathing(record), 0);
  const auto gate = gate::identity_gate_map(config.v_states, config.u_classes);
  nn::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(m, x, 0, record.stages, &gate, {}));
}
BENCHMARK(BM_ForwardSmall)->Arg(600)->Arg(2400)->Unit(benchmark::kMillisecond);

void BM_ForwardFull(benchmark::State& state) {
  const model::ModelConfig config;
  const auto m = model::build_model<float>(config, 1);
  const auto record = nights(1, static_cast<std::size_t>(state.range(0))).front();
  const auto x = model::make_input<float>(config, data::model_breathing(record), 0);
  const auto gate = gate::identity_gate_map(config.v_states, config.u_classes);
  nn::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(m, x, 0, record.stages, &gate, {}));
}
BENCHMARK(BM_ForwardFull)->Arg(2400)->Unit(benchmark::kMillisecond);

// One Adam step on one night with the desk-scale config.
void BM_TrainStep(benchmark::State& state) {
  const auto records = nights(1, static_cast<std::size_t>(state.range(0)));
  const auto config = model::small_config(model::Variant::kGated);
  train::TrainOptions options;
  options.epochs = 1;
  auto train_state = train::init_train_state(config, options);
  train::TrainLog log;
  for (auto _ : state) train::train_epochs(train_state, records, options, train_state.epochs_done + 1, log);
}
BENCHMARK(BM_TrainStep)->Arg(600)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
