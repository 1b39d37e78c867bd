#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gbu/nn/tensor.hpp"

// Differentiable kernels. Sequence-like tensors are rank 2: [channels, length]
// for the convolutional path and [length, features] for the attention path.
namespace gbu::nn {

// ---- elementwise -----------------------------------------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

// ---- reductions ------------------------------------------------------------
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// sum(x * weights) with constant weights; used to project outputs to scalars.
template <typename T> Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights);

// ---- shape -----------------------------------------------------------------
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
/// Slice of a rank-2 tensor along `axis` (0 or 1).
template <typename T> Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
/// Concatenation of rank-2 tensors along `axis` (0 or 1).
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// ---- dense -----------------------------------------------------------------
/// a[M,K] * b[K,N]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a[M,K] * b[N,K]^T
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
/// x[L,in] * weight[out,in]^T + bias[out]
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// ---- activations / normalization -------------------------------------------
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
/// Row-wise softmax of a rank-2 tensor.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x);
/// Normalizes each row of x[L,d] over d.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps = 1e-12);

struct RReluBounds {
  double lower = 1.0 / 8.0;
  double upper = 1.0 / 3.0;
};

/// Randomized leaky ReLU. Train mode draws one slope per negative entry from
/// U[lower, upper] using `rng`; eval mode uses the mean slope.
template <typename T>
Tensor<T> rrelu(const Tensor<T>& x, RReluBounds bounds, Mode mode, std::mt19937_64* rng);

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Running statistics; forward in train mode updates their storage in place.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

/// Per-channel normalization of x[C,L] over L.
template <typename T>
Tensor<T> batch_norm1d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormState<T>& state, BatchNormOptions options, Mode mode);

// ---- convolution -----------------------------------------------------------
/// x[C_in,L], weight[C_out,C_in,k], bias[C_out] -> [C_out, (L+2p-k)/s + 1]
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding);

/// x[C_in,L], weight[C_in,C_out,k], bias[C_out] -> [C_out, (L-1)s - 2p + k]
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding);

// ---- selection / losses ----------------------------------------------------
/// out[t] = x[index[t], t] for x[N,T]; indices are zero-based rows.
template <typename T> Tensor<T> select_rows(const Tensor<T>& x, std::span<const int> index);

/// Mean |a - b| over positions where mask != 0 (all positions if mask empty).
template <typename T>
Tensor<T> masked_l1(const Tensor<T>& prediction, std::span<const T> target, std::span<const std::uint8_t> mask);

/// Pearson correlation over masked positions with `eps` inside the square root
/// of the denominator.
template <typename T>
Tensor<T> masked_pearson(const Tensor<T>& prediction, std::span<const T> target,
                         std::span<const std::uint8_t> mask, double eps);

/// Sum over t of -log softmax(logits[:,t])[label[t]] for logits[C,T]; positions
/// whose label equals `ignore_label` contribute nothing.
template <typename T>
Tensor<T> cross_entropy_sum(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                            std::uint8_t ignore_label);

}  // namespace gbu::nn
