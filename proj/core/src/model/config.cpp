#include "gbu/model/config.hpp"

#include <functional>
#include <numeric>

#include "gbu/common/hash.hpp"

namespace gbu::model {

namespace {

constexpr std::size_t kBottleneckFactor = 240;

std::size_t product(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

void require_positive(const std::vector<std::size_t>& v, const char* name) {
  for (std::size_t x : v) require(x > 0, ErrorCode::kConfig, std::string(name) + " entries must be positive");
}

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kBackbone: return "backbone";
    case Variant::kCnn: return "cnn";
    case Variant::kVarAug: return "varaug";
    case Variant::kGated: return "gated";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kBackbone, Variant::kCnn, Variant::kVarAug, Variant::kGated})
    if (to_string(v) == name) return v;
  fail(ErrorCode::kConfig, "unknown variant \"" + std::string(name) + "\" (backbone|cnn|varaug|gated)");
}

std::size_t ModelConfig::quantum_seconds() const { return product(encoder_strides) / static_cast<std::size_t>(f_b); }

std::size_t ModelConfig::encoder_depth() const {
  return variant == Variant::kCnn ? encoder_strides.size() - 1 : encoder_strides.size();
}

std::size_t ModelConfig::feature_channels() const {
  return has_bert() ? bert_hidden : encoder_channels[encoder_depth() - 1];
}

void ModelConfig::validate() const {
  require(f_b > 0 && f_o > 0 && f_b % f_o == 0, ErrorCode::kConfig, "f_b must be a positive multiple of f_o");
  require(encoder_channels.size() == 9 && encoder_strides.size() == 9, ErrorCode::kConfig,
          "encoder needs 9 channel widths and 9 strides");
  require(decoder_channels.size() == 7 && decoder_strides.size() == 7, ErrorCode::kConfig,
          "decoder needs 7 channel widths and 7 strides");
  require(!aux_strides.empty() && aux_channels.size() == aux_strides.size(), ErrorCode::kConfig,
          "aux_channels and aux_strides must have the same nonzero length");
  for (const auto* v : {&encoder_channels, &encoder_strides, &decoder_channels, &decoder_strides, &aux_channels,
                        &aux_strides})
    require_positive(*v, "channel/stride");
  require(product(encoder_strides) == kBottleneckFactor, ErrorCode::kConfig,
          "product of encoder strides must be 240, got " + std::to_string(product(encoder_strides)));
  require(kBottleneckFactor % static_cast<std::size_t>(f_b) == 0, ErrorCode::kConfig, "f_b must divide 240");
  const std::size_t out_factor = kBottleneckFactor * static_cast<std::size_t>(f_o) / static_cast<std::size_t>(f_b);
  require(product(decoder_strides) == out_factor, ErrorCode::kConfig,
          "product of decoder strides must be 240*f_o/f_b = " + std::to_string(out_factor));
  require(product(aux_strides) == out_factor, ErrorCode::kConfig,
          "product of aux strides must be 240*f_o/f_b = " + std::to_string(out_factor));
  require(kernel_size % 2 == 1, ErrorCode::kConfig, "kernel_size must be odd");
  std::size_t max_stride = 0;
  for (const auto* v : {&encoder_strides, &decoder_strides, &aux_strides})
    for (std::size_t s : *v) max_stride = std::max(max_stride, s);
  require(kernel_size >= max_stride, ErrorCode::kConfig, "kernel_size must be at least the largest stride");
  if (variant == Variant::kCnn)
    require(encoder_strides.back() == 1, ErrorCode::kConfig, "cnn variant drops the last encoder layer; its stride must be 1");
  if (has_bert()) {
    require(bert_layers >= 1, ErrorCode::kConfig, "bert_layers must be >= 1");
    require(bert_heads >= 1 && bert_heads <= bert_hidden, ErrorCode::kConfig, "need 1 <= bert_heads <= bert_hidden");
    require(bert_intermediate >= 1 && max_positions >= 1, ErrorCode::kConfig,
            "bert_intermediate and max_positions must be positive");
  }
  require(n_gate_heads >= 1, ErrorCode::kConfig, "n_gate_heads must be >= 1");
  require(lambda >= 0.0 && lambda_u >= 0.0, ErrorCode::kConfig, "lambda and lambda_u must be non-negative");
  require(rrelu_lower >= 0.0 && rrelu_lower <= rrelu_upper, ErrorCode::kConfig, "need 0 <= rrelu_lower <= rrelu_upper");
  require(u_classes >= 1 && u_classes < 255, ErrorCode::kConfig, "u_classes must be in [1, 254]");
  require(v_states >= 1, ErrorCode::kConfig, "v_states must be >= 1");
}

ModelConfig tiny_config(Variant variant) {
  ModelConfig c;
  c.encoder_channels = {4, 4, 4, 4, 4, 4, 4, 4, 4};
  c.decoder_channels = {4, 4, 4, 4, 4, 4, 4};
  c.aux_channels = {4, 4, 4};
  c.bert_layers = 1;
  c.bert_heads = 2;
  c.bert_hidden = 8;
  c.bert_intermediate = 16;
  c.max_positions = 512;
  c.variant = variant;
  c.n_gate_heads = variant == Variant::kGated ? 6 : 1;
  return c;
}

ModelConfig small_config(Variant variant) {
  ModelConfig c = tiny_config(variant);
  c.encoder_channels = {16, 16, 16, 32, 32, 32, 32, 32, 32};
  c.decoder_channels = {32, 32, 32, 16, 16, 16, 16};
  c.aux_channels = {16, 16, 16};
  c.bert_layers = 2;
  c.bert_hidden = 32;
  c.bert_intermediate = 64;
  return c;
}

Json to_json(const ModelConfig& c) {
  return Json{{"f_b", c.f_b},
              {"f_o", c.f_o},
              {"encoder_channels", c.encoder_channels},
              {"encoder_strides", c.encoder_strides},
              {"decoder_channels", c.decoder_channels},
              {"decoder_strides", c.decoder_strides},
              {"aux_channels", c.aux_channels},
              {"aux_strides", c.aux_strides},
              {"kernel_size", c.kernel_size},
              {"bert_layers", c.bert_layers},
              {"bert_heads", c.bert_heads},
              {"bert_hidden", c.bert_hidden},
              {"bert_intermediate", c.bert_intermediate},
              {"max_positions", c.max_positions},
              {"n_gate_heads", c.n_gate_heads},
              {"lambda", c.lambda},
              {"lambda_u", c.lambda_u},
              {"rrelu_bounds", {c.rrelu_lower, c.rrelu_upper}},
              {"variant", std::string(to_string(c.variant))},
              {"u_classes", c.u_classes},
              {"v_states", c.v_states}};
}

ModelConfig model_config_from_json(const Json& j) {
  static constexpr std::string_view where = "model";
  reject_unknown_keys(j,
                      {"f_b", "f_o", "encoder_channels", "encoder_strides", "decoder_channels", "decoder_strides",
                       "aux_channels", "aux_strides", "kernel_size", "bert_layers", "bert_heads", "bert_hidden",
                       "bert_intermediate", "max_positions", "n_gate_heads", "lambda", "lambda_u", "rrelu_bounds",
                       "variant", "u_classes", "v_states"},
                      where);
  ModelConfig c;
  c.f_b = json_get(j, "f_b", c.f_b, where);
  c.f_o = json_get(j, "f_o", c.f_o, where);
  c.encoder_channels = json_get(j, "encoder_channels", c.encoder_channels, where);
  c.encoder_strides = json_get(j, "encoder_strides", c.encoder_strides, where);
  c.decoder_channels = json_get(j, "decoder_channels", c.decoder_channels, where);
  c.decoder_strides = json_get(j, "decoder_strides", c.decoder_strides, where);
  c.aux_channels = json_get(j, "aux_channels", c.aux_channels, where);
  c.aux_strides = json_get(j, "aux_strides", c.aux_strides, where);
  c.kernel_size = json_get(j, "kernel_size", c.kernel_size, where);
  c.bert_layers = json_get(j, "bert_layers", c.bert_layers, where);
  c.bert_heads = json_get(j, "bert_heads", c.bert_heads, where);
  c.bert_hidden = json_get(j, "bert_hidden", c.bert_hidden, where);
  c.bert_intermediate = json_get(j, "bert_intermediate", c.bert_intermediate, where);
  c.max_positions = json_get(j, "max_positions", c.max_positions, where);
  c.n_gate_heads = json_get(j, "n_gate_heads", c.n_gate_heads, where);
  c.lambda = json_get(j, "lambda", c.lambda, where);
  c.lambda_u = json_get(j, "lambda_u", c.lambda_u, where);
  const auto bounds = json_get(j, "rrelu_bounds", std::vector<double>{c.rrelu_lower, c.rrelu_upper}, where);
  require(bounds.size() == 2, ErrorCode::kConfig, "model.rrelu_bounds must be [lower, upper]");
  c.rrelu_lower = bounds[0];
  c.rrelu_upper = bounds[1];
  c.variant = parse_variant(json_get(j, "variant", std::string(to_string(c.variant)), where));
  c.u_classes = json_get(j, "u_classes", c.u_classes, where);
  c.v_states = json_get(j, "v_states", c.v_states, where);
  if (c.variant != Variant::kGated && !j.contains("n_gate_heads")) c.n_gate_heads = 1;
  c.validate();
  return c;
}

std::string config_hash(const Json& canonical) { return hex64(fnv1a64(canonical.dump())); }

}  // namespace gbu::model
