#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gbu/gate/gate_map.hpp"
#include "gbu/model/config.hpp"
#include "gbu/model/param_set.hpp"
#include "gbu/nn/ops.hpp"

namespace gbu::model {

template <typename T>
struct Model {
  ModelConfig config;
  ParamSet<T> params;
};

/// Where a gated model takes the inaccessible state for G(v, u) from.
/// kAuto: the true series in train mode when one is given, else the prediction.
enum class GateSource { kAuto, kTruth, kPredicted };

/// Train mode uses batch statistics and random RReLU slopes drawn from `rng`.
struct ForwardContext {
  nn::Mode mode = nn::Mode::kEval;
  std::mt19937_64* rng = nullptr;
  GateSource gate_source = GateSource::kAuto;
};

/// Encoder layer whose output is concatenated onto the input of a decoder layer.
struct SkipLink {
  std::size_t encoder_layer;
  std::size_t decoder_layer;
};

/// Pairs every decoder input scale finer than the bottleneck with the deepest
/// encoder output at the same temporal resolution. Empty for the CNN variant.
std::vector<SkipLink> skip_plan(const ModelConfig& config);

template <typename T>
struct Encoded {
  nn::Tensor<T> features;            // [n, f_b*T/240]
  std::vector<nn::Tensor<T>> skips;  // finest scale first, one per SkipLink
  int v = -1;                         // accessible state read off the VarAug input channel
};

template <typename T>
struct Prediction {
  nn::Tensor<T> y_hat;                     // [f_o*T], normalized SpO2
  nn::Tensor<T> per_head;                  // [N, f_o*T]
  std::optional<nn::Tensor<T>> u_logits;   // [|U|, f_o*T]
  std::vector<int> gate;                   // 1..N per second; empty unless gated
};

template <typename T>
struct LossTerms {
  nn::Tensor<T> total;
  double l1 = 0.0;
  double corr = 0.0;
  double ce = 0.0;  // mean over f_o*T
};

inline constexpr double kCorrEps = 1e-8;

/// Deterministic in (config, seed). Validates the config first.
template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed);

/// Builds the model input [C_in, f_b*T] from breathing samples; the VarAug
/// variant appends v / (|V| - 1) as a constant second channel.
template <typename T>
nn::Tensor<T> make_input(const ModelConfig& config, std::span<const float> breathing, int v);

/// x[C_in, f_b*T]; f_b*T must be a multiple of 240 (kLength otherwise).
template <typename T>
Encoded<T> encode(const Model<T>& model, const nn::Tensor<T>& x, const ForwardContext& ctx);

/// Head i in 1..N; returns [f_o*T].
template <typename T>
nn::Tensor<T> decode_head(const Model<T>& model, std::size_t head, const Encoded<T>& encoded,
                          const ForwardContext& ctx);

/// Logits [|U|, f_o*T] from the bottleneck features.
template <typename T>
nn::Tensor<T> predict_inaccessible(const Model<T>& model, const nn::Tensor<T>& features, const ForwardContext& ctx);

/// Per-column argmax; ties go to the lowest class index.
template <typename T>
std::vector<std::uint8_t> argmax_classes(const nn::Tensor<T>& logits);

/// y_hat[t] = per_head[s[t], t] with s one-based.
template <typename T>
nn::Tensor<T> combine_heads(const nn::Tensor<T>& per_head, std::span<const int> s);

/// `u` may be empty. Gated models need `gate`; see GateSource for which u feeds it.
template <typename T>
Prediction<T> forward(const Model<T>& model, const nn::Tensor<T>& breathing_input, int v,
                      std::span<const std::uint8_t> u, const gate::GateMap* gate, const ForwardContext& ctx);

/// Mean |y_hat - y| - lambda * corr(y_hat, y) over masked positions (all if mask empty).
template <typename T>
LossTerms<T> loss_main(const nn::Tensor<T>& y_hat, std::span<const T> y, double lambda,
                       std::span<const std::uint8_t> mask = {});

/// loss_main plus lambda_u / (f_o*T) times the summed cross-entropy; labels equal to
/// gate::kMissingU are ignored.
template <typename T>
LossTerms<T> loss_gbu(const nn::Tensor<T>& y_hat, const nn::Tensor<T>& u_logits, std::span<const T> y,
                      std::span<const std::uint8_t> u, double lambda, double lambda_u);

/// Loss appropriate to the variant: loss_gbu when an aux head exists and
/// lambda_u > 0, loss_main otherwise.
template <typename T>
LossTerms<T> variant_loss(const Model<T>& model, const Prediction<T>& prediction, std::span<const T> y,
                          std::span<const std::uint8_t> u);

}  // namespace gbu::model
