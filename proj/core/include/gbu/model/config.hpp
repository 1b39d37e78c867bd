#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gbu/common/json.hpp"

namespace gbu::model {

enum class Variant { kBackbone, kCnn, kVarAug, kGated };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view name);

/// Architecture and loss hyperparameters. Defaults are the full-scale profile.
struct ModelConfig {
  int f_b = 10;  // breathing sample rate, Hz
  int f_o = 1;   // oxygen sample rate, Hz
  std::vector<std::size_t> encoder_channels{32, 64, 64, 128, 128, 256, 256, 256, 256};
  std::vector<std::size_t> encoder_strides{5, 2, 1, 2, 2, 2, 3, 1, 1};
  std::vector<std::size_t> decoder_channels{256, 128, 128, 64, 64, 32, 32};
  std::vector<std::size_t> decoder_strides{3, 2, 2, 2, 1, 1, 1};
  std::vector<std::size_t> aux_channels{128, 64, 32};
  std::vector<std::size_t> aux_strides{3, 2, 4};
  std::size_t kernel_size = 7;
  std::size_t bert_layers = 8;
  std::size_t bert_heads = 6;
  std::size_t bert_hidden = 256;
  std::size_t bert_intermediate = 512;
  std::size_t max_positions = 2400;
  std::size_t n_gate_heads = 6;
  double lambda = 0.2;
  double lambda_u = 1.0;
  double rrelu_lower = 1.0 / 8.0;
  double rrelu_upper = 1.0 / 3.0;
  Variant variant = Variant::kGated;
  std::size_t u_classes = 3;
  std::size_t v_states = 2;

  /// Seconds per bottleneck step: product(encoder_strides) / f_b.
  [[nodiscard]] std::size_t quantum_seconds() const;
  [[nodiscard]] std::size_t input_channels() const { return variant == Variant::kVarAug ? 2 : 1; }
  /// Number of encoder layers actually used (the CNN variant drops the last one).
  [[nodiscard]] std::size_t encoder_depth() const;
  [[nodiscard]] bool has_bert() const { return variant != Variant::kCnn; }
  [[nodiscard]] bool has_aux_head() const { return variant == Variant::kVarAug || variant == Variant::kGated; }
  [[nodiscard]] std::size_t n_heads() const { return variant == Variant::kGated ? n_gate_heads : 1; }
  /// Channel count of the bottleneck features the decoder consumes.
  [[nodiscard]] std::size_t feature_channels() const;

  /// Throws kConfig on any violated invariant.
  void validate() const;
};

/// Width-4 model for gradient checks and unit tests.
ModelConfig tiny_config(Variant variant = Variant::kBackbone);
/// Desk-scale training model: widths 16/32, two BERT layers of hidden 32.
ModelConfig small_config(Variant variant = Variant::kBackbone);

Json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const Json& j);

/// FNV-1a of the canonical JSON dump.
std::string config_hash(const Json& canonical);

}  // namespace gbu::model
