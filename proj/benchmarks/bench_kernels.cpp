#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gbu/eval/metrics.hpp"
#include "gbu/nn/attention.hpp"
#include "gbu/nn/ops.hpp"

using gbu::nn::Tensor;

namespace {

Tensor<float> random_tensor(gbu::nn::Shape shape, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<float> n(0.0f, 0.5f);
  std::vector<float> v(gbu::nn::shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor<float>::from_data(std::move(shape), std::move(v), grad);
}

// args: channels, length
void BM_Conv1dForward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto c = static_cast<std::size_t>(state.range(0)), len = static_cast<std::size_t>(state.range(1));
  const auto x = random_tensor({c, len}, rng), w = random_tensor({c, c, 3}, rng), b = random_tensor({c}, rng);
  gbu::nn::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(gbu::nn::conv1d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * 3 * len));
}
BENCHMARK(BM_Conv1dForward)->Args({16, 2400})->Args({32, 2400})->Args({64, 600});

void BM_Conv1dBackward(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto c = static_cast<std::size_t>(state.range(0)), len = static_cast<std::size_t>(state.range(1));
  const auto x = random_tensor({c, len}, rng, true), w = random_tensor({c, c, 3}, rng, true);
  const auto b = random_tensor({c}, rng, true);
  for (auto _ : state) {
    gbu::nn::sum(gbu::nn::conv1d(x, w, b, 1, 1)).backward();
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv1dBackward)->Args({16, 2400})->Args({32, 2400});

// args: sequence length, hidden, heads
void BM_SelfAttention(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto len = static_cast<std::size_t>(state.range(0)), h = static_cast<std::size_t>(state.range(1));
  const auto heads = static_cast<std::size_t>(state.range(2)), inter = 2 * h;
  gbu::nn::AttentionBlockParams<float> p;
  p.query_weight = random_tensor({h, h}, rng);
  p.key_weight = random_tensor({h, h}, rng);
  p.value_weight = random_tensor({h, h}, rng);
  p.output_weight = random_tensor({h, h}, rng);
  p.query_bias = p.key_bias = p.value_bias = p.output_bias = random_tensor({h}, rng);
  p.attention_norm_gamma = p.output_norm_gamma = Tensor<float>::full({h}, 1.0f);
  p.attention_norm_beta = p.output_norm_beta = Tensor<float>::zeros({h});
  p.intermediate_weight = random_tensor({inter, h}, rng);
  p.intermediate_bias = random_tensor({inter}, rng);
  p.ffn_output_weight = random_tensor({h, inter}, rng);
  p.ffn_output_bias = random_tensor({h}, rng);
  const auto x = random_tensor({len, h}, rng);
  gbu::nn::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(gbu::nn::multi_head_self_attention(x, p, heads));
}
BENCHMARK(BM_SelfAttention)->Args({100, 32, 2})->Args({100, 252, 6})->Args({400, 252, 6});

void BM_SegmentMetrics(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(95.0, 2.0);
  std::vector<double> y(static_cast<std::size_t>(state.range(0))), y_hat(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = n(rng);
    y_hat[i] = y[i] + n(rng) - 95.0;
  }
  for (auto _ : state) {
    for (const auto& [begin, end] : gbu::eval::segment(y.size())) {
      benchmark::DoNotOptimize(gbu::eval::metrics(std::span<const double>(y_hat).subspan(begin, end - begin),
                                                  std::span<const double>(y).subspan(begin, end - begin)));
    }
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SegmentMetrics)->Arg(28800);

}  // namespace

BENCHMARK_MAIN();
