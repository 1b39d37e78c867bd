#include "gbu/model/model.hpp"

#include <algorithm>
#include <cmath>

#include "gbu/nn/attention.hpp"

namespace gbu::model {

using nn::Tensor;

namespace {

std::string layer_name(const std::string& prefix, std::size_t index) { return prefix + "." + std::to_string(index); }

std::string head_prefix(std::size_t head) { return "heads." + std::to_string(head); }

std::size_t deconv_padding(std::size_t kernel, std::size_t stride) { return (kernel - stride) / 2; }

template <typename T>
class Initializer {
 public:
  Initializer(ParamSet<T>& params, std::uint64_t seed) : params_(params), rng_(seed) {}

  void uniform(const std::string& name, nn::Shape shape, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    fill(name, std::move(shape), [&] { return dist(rng_); });
  }

  void normal(const std::string& name, nn::Shape shape, double stddev = 0.02) {
    std::normal_distribution<double> dist(0.0, stddev);
    fill(name, std::move(shape), [&] { return dist(rng_); });
  }

  void constant(const std::string& name, nn::Shape shape, double value, bool trainable = true) {
    params_.add(name, Tensor<T>::full(std::move(shape), static_cast<T>(value)), trainable);
  }

  /// gamma 1, beta 0, running mean 0, running var 1.
  void batch_norm(const std::string& prefix, std::size_t channels) {
    constant(prefix + ".gamma", {channels}, 1.0);
    constant(prefix + ".beta", {channels}, 0.0);
    constant(prefix + ".running_mean", {channels}, 0.0, false);
    constant(prefix + ".running_var", {channels}, 1.0, false);
  }

  void linear(const std::string& prefix, std::size_t out, std::size_t in) {
    normal(prefix + ".weight", {out, in});
    constant(prefix + ".bias", {out}, 0.0);
  }

  void layer_norm(const std::string& prefix, std::size_t width) {
    constant(prefix + ".gamma", {width}, 1.0);
    constant(prefix + ".beta", {width}, 0.0);
  }

 private:
  template <typename Draw>
  void fill(const std::string& name, nn::Shape shape, Draw&& draw) {
    std::vector<T> data(nn::shape_numel(shape));
    for (T& v : data) v = static_cast<T>(draw());
    params_.add(name, Tensor<T>::from_data(std::move(shape), std::move(data)), true);
  }

  ParamSet<T>& params_;
  std::mt19937_64 rng_;
};

/// Input channel count of every decoder layer, including skip concatenations.
std::vector<std::size_t> decoder_input_channels(const ModelConfig& c, const std::vector<SkipLink>& plan) {
  std::vector<std::size_t> in(c.decoder_channels.size());
  std::size_t prev = c.feature_channels();
  for (std::size_t j = 0; j < in.size(); ++j) {
    in[j] = prev;
    for (const auto& link : plan)
      if (link.decoder_layer == j) in[j] += c.encoder_channels[link.encoder_layer];
    prev = c.decoder_channels[j];
  }
  return in;
}

template <typename T>
void add_deconv_stack(Initializer<T>& init, const std::string& prefix, const std::vector<std::size_t>& in_channels,
                      const std::vector<std::size_t>& out_channels, std::size_t kernel) {
  for (std::size_t j = 0; j < out_channels.size(); ++j) {
    const std::string name = layer_name(prefix, j);
    init.uniform(name + ".deconv.weight", {in_channels[j], out_channels[j], kernel},
                 static_cast<double>(in_channels[j] * kernel));
    init.constant(name + ".deconv.bias", {out_channels[j]}, 0.0);
    init.batch_norm(name + ".bn", out_channels[j]);
  }
}

template <typename T>
nn::BatchNormState<T> bn_state(const ParamSet<T>& p, const std::string& prefix) {
  return {p.at(prefix + ".running_mean"), p.at(prefix + ".running_var")};
}

template <typename T>
Tensor<T> norm_act(const Model<T>& model, const Tensor<T>& x, const std::string& bn_prefix,
                   const ForwardContext& ctx) {
  const auto& p = model.params;
  auto state = bn_state(p, bn_prefix);
  const auto h = nn::batch_norm1d(x, p.at(bn_prefix + ".gamma"), p.at(bn_prefix + ".beta"), state,
                                  nn::BatchNormOptions{}, ctx.mode);
  require(ctx.mode == nn::Mode::kEval || ctx.rng != nullptr, ErrorCode::kContract,
          "train-mode forward needs an RNG for RReLU");
  return nn::rrelu(h, nn::RReluBounds{model.config.rrelu_lower, model.config.rrelu_upper}, ctx.mode, ctx.rng);
}

/// Transposed conv with its output cropped to exactly input_length * stride.
template <typename T>
Tensor<T> upsample_layer(const Model<T>& model, const Tensor<T>& x, const std::string& prefix, std::size_t stride,
                         const ForwardContext& ctx) {
  const auto& p = model.params;
  const std::size_t kernel = model.config.kernel_size;
  const std::size_t target = x.dim(1) * stride;
  auto h = nn::conv_transpose1d(x, p.at(prefix + ".deconv.weight"), p.at(prefix + ".deconv.bias"), stride,
                                deconv_padding(kernel, stride));
  if (h.dim(1) != target) h = nn::narrow(h, 1, 0, target);
  return norm_act(model, h, prefix + ".bn", ctx);
}

template <typename T>
nn::BertParams<T> bert_params(const Model<T>& model) {
  const auto& p = model.params;
  nn::BertParams<T> bert;
  bert.position_embeddings = p.at("bert.position_embeddings");
  bert.embedding_norm_gamma = p.at("bert.embedding_norm.gamma");
  bert.embedding_norm_beta = p.at("bert.embedding_norm.beta");
  for (std::size_t l = 0; l < model.config.bert_layers; ++l) {
    const std::string b = layer_name("bert.layers", l);
    nn::AttentionBlockParams<T> block;
    block.query_weight = p.at(b + ".query.weight");
    block.query_bias = p.at(b + ".query.bias");
    block.key_weight = p.at(b + ".key.weight");
    block.key_bias = p.at(b + ".key.bias");
    block.value_weight = p.at(b + ".value.weight");
    block.value_bias = p.at(b + ".value.bias");
    block.output_weight = p.at(b + ".attention_output.weight");
    block.output_bias = p.at(b + ".attention_output.bias");
    block.attention_norm_gamma = p.at(b + ".attention_norm.gamma");
    block.attention_norm_beta = p.at(b + ".attention_norm.beta");
    block.intermediate_weight = p.at(b + ".intermediate.weight");
    block.intermediate_bias = p.at(b + ".intermediate.bias");
    block.ffn_output_weight = p.at(b + ".ffn_output.weight");
    block.ffn_output_bias = p.at(b + ".ffn_output.bias");
    block.output_norm_gamma = p.at(b + ".output_norm.gamma");
    block.output_norm_beta = p.at(b + ".output_norm.beta");
    bert.blocks.push_back(std::move(block));
  }
  return bert;
}

}  // namespace

std::vector<SkipLink> skip_plan(const ModelConfig& c) {
  if (c.variant == Variant::kCnn) return {};
  // Downsampling factor (relative to the input) after each encoder layer.
  std::vector<std::size_t> enc_factor(c.encoder_strides.size());
  std::size_t f = 1;
  for (std::size_t i = 0; i < enc_factor.size(); ++i) enc_factor[i] = f *= c.encoder_strides[i];
  const std::size_t bottleneck = f;

  std::vector<SkipLink> plan;
  std::size_t up = 1;
  std::vector<std::size_t> used;
  for (std::size_t j = 0; j < c.decoder_strides.size(); ++j) {
    const std::size_t factor = bottleneck / up;
    up *= c.decoder_strides[j];
    if (j == 0 || std::find(used.begin(), used.end(), factor) != used.end()) continue;
    for (std::size_t i = enc_factor.size(); i-- > 0;) {
      if (enc_factor[i] != factor) continue;
      plan.push_back({i, j});
      used.push_back(factor);
      break;
    }
  }
  std::sort(plan.begin(), plan.end(), [](const SkipLink& a, const SkipLink& b) { return a.encoder_layer < b.encoder_layer; });
  return plan;
}

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model<T> model{config, {}};
  Initializer<T> init(model.params, seed);
  const std::size_t k = config.kernel_size;

  std::size_t channels = config.input_channels();
  for (std::size_t i = 0; i < config.encoder_depth(); ++i) {
    const std::string name = layer_name("encoder", i);
    const std::size_t out = config.encoder_channels[i];
    init.uniform(name + ".conv.weight", {out, channels, k}, static_cast<double>(channels * k));
    init.constant(name + ".conv.bias", {out}, 0.0);
    init.batch_norm(name + ".bn", out);
    channels = out;
  }

  if (config.has_bert()) {
    const std::size_t hidden = config.bert_hidden;
    const std::size_t width = (hidden / config.bert_heads) * config.bert_heads;
    if (channels != hidden) init.linear("bert.input_projection", hidden, channels);
    init.normal("bert.position_embeddings", {config.max_positions, hidden});
    init.layer_norm("bert.embedding_norm", hidden);
    if (config.variant == Variant::kVarAug) init.normal("bert.variable_embeddings", {config.v_states, hidden});
    for (std::size_t l = 0; l < config.bert_layers; ++l) {
      const std::string b = layer_name("bert.layers", l);
      init.linear(b + ".query", width, hidden);
      init.linear(b + ".key", width, hidden);
      init.linear(b + ".value", width, hidden);
      init.linear(b + ".attention_output", hidden, width);
      init.layer_norm(b + ".attention_norm", hidden);
      init.linear(b + ".intermediate", config.bert_intermediate, hidden);
      init.linear(b + ".ffn_output", hidden, config.bert_intermediate);
      init.layer_norm(b + ".output_norm", hidden);
    }
  }

  const auto in_channels = decoder_input_channels(config, skip_plan(config));
  for (std::size_t h = 1; h <= config.n_heads(); ++h) {
    const std::string prefix = head_prefix(h);
    add_deconv_stack(init, prefix + ".decoder", in_channels, config.decoder_channels, k);
    // VarAug feeds the v level to the output projection as one more channel
    const std::size_t last = config.decoder_channels.back() + (config.variant == Variant::kVarAug ? 1 : 0);
    init.uniform(prefix + ".output.weight", {1, last, 1}, static_cast<double>(last));
    init.constant(prefix + ".output.bias", {1}, 0.0);
  }

  if (config.has_aux_head()) {
    std::vector<std::size_t> aux_in(config.aux_channels.size());
    aux_in[0] = config.feature_channels();
    for (std::size_t j = 1; j < aux_in.size(); ++j) aux_in[j] = config.aux_channels[j - 1];
    add_deconv_stack(init, "aux.decoder", aux_in, config.aux_channels, k);
    const std::size_t last = config.aux_channels.back();
    init.uniform("aux.output.weight", {config.u_classes, last, 1}, static_cast<double>(last));
    init.constant("aux.output.bias", {config.u_classes}, 0.0);
  }
  return model;
}

template <typename T>
Tensor<T> make_input(const ModelConfig& config, std::span<const float> breathing, int v) {
  require(!breathing.empty(), ErrorCode::kEmptyInput, "empty breathing series");
  const std::size_t len = breathing.size();
  std::vector<T> data(config.input_channels() * len);
  for (std::size_t i = 0; i < len; ++i) data[i] = static_cast<T>(breathing[i]);
  if (config.variant == Variant::kVarAug) {
    require(v >= 0 && static_cast<std::size_t>(v) < config.v_states, ErrorCode::kContract,
            "accessible state " + std::to_string(v) + " outside 0.." + std::to_string(config.v_states - 1));
    const double denom = config.v_states > 1 ? static_cast<double>(config.v_states - 1) : 1.0;
    const T level = static_cast<T>(static_cast<double>(v) / denom);
    std::fill(data.begin() + static_cast<std::ptrdiff_t>(len), data.end(), level);
  }
  return Tensor<T>::from_data({config.input_channels(), len}, std::move(data));
}

template <typename T>
Encoded<T> encode(const Model<T>& model, const Tensor<T>& x, const ForwardContext& ctx) {
  const auto& c = model.config;
  const auto& p = model.params;
  require(x.rank() == 2 && x.dim(0) == c.input_channels(), ErrorCode::kDimension,
          "encode: expected input [" + std::to_string(c.input_channels()) + ", L], got " + nn::shape_string(x.shape()));
  const std::size_t factor = c.quantum_seconds() * static_cast<std::size_t>(c.f_b);
  require(x.dim(1) % factor == 0, ErrorCode::kLength,
          "input length " + std::to_string(x.dim(1)) + " is not a multiple of " + std::to_string(factor) +
              " samples; crop the record first");

  const auto plan = skip_plan(c);
  Encoded<T> out;
  if (c.variant == Variant::kVarAug) {
    const double denom = c.v_states > 1 ? static_cast<double>(c.v_states - 1) : 1.0;
    out.v = static_cast<int>(std::lround(static_cast<double>(x.at(x.dim(1))) * denom));
    require(out.v >= 0 && static_cast<std::size_t>(out.v) < c.v_states, ErrorCode::kContract,
            "VarAug input carries an accessible state outside the configured range");
  }
  Tensor<T> h = x;
  for (std::size_t i = 0; i < c.encoder_depth(); ++i) {
    const std::string name = layer_name("encoder", i);
    h = nn::conv1d(h, p.at(name + ".conv.weight"), p.at(name + ".conv.bias"), c.encoder_strides[i],
                   c.kernel_size / 2);
    h = norm_act(model, h, name + ".bn", ctx);
    for (const auto& link : plan)
      if (link.encoder_layer == i) out.skips.push_back(h);
  }

  if (c.has_bert()) {
    Tensor<T> seq = nn::transpose(h);
    if (p.contains("bert.input_projection.weight"))
      seq = nn::linear(seq, p.at("bert.input_projection.weight"), p.at("bert.input_projection.bias"));
    if (out.v >= 0) {
      // train-mode batch norm over one night cancels the constant input channel, so v also enters here
      const auto row = nn::narrow(p.at("bert.variable_embeddings"), 0, static_cast<std::size_t>(out.v), 1);
      seq = nn::add(seq, nn::matmul(Tensor<T>::full({seq.dim(0), 1}, T{1}), row));
    }
    seq = nn::bert_encode(seq, bert_params(model), c.bert_heads);
    h = nn::transpose(seq);
  }
  out.features = h;
  return out;
}

template <typename T>
Tensor<T> decode_head(const Model<T>& model, std::size_t head, const Encoded<T>& encoded, const ForwardContext& ctx) {
  const auto& c = model.config;
  require(head >= 1 && head <= c.n_heads(), ErrorCode::kHeadIndex,
          "head " + std::to_string(head) + " outside 1.." + std::to_string(c.n_heads()));
  const auto plan = skip_plan(c);
  require(encoded.skips.size() == plan.size(), ErrorCode::kContract, "decode_head: skip list does not match model");
  const std::string prefix = head_prefix(head);
  Tensor<T> h = encoded.features;
  for (std::size_t j = 0; j < c.decoder_strides.size(); ++j) {
    for (std::size_t s = 0; s < plan.size(); ++s)
      if (plan[s].decoder_layer == j) h = nn::concat(std::vector<Tensor<T>>{h, encoded.skips[s]}, 0);
    h = upsample_layer(model, h, layer_name(prefix + ".decoder", j), c.decoder_strides[j], ctx);
  }
  if (encoded.v >= 0) {
    const double denom = c.v_states > 1 ? static_cast<double>(c.v_states - 1) : 1.0;
    const auto level = Tensor<T>::full({1, h.dim(1)}, static_cast<T>(encoded.v / denom));
    h = nn::concat(std::vector<Tensor<T>>{h, level}, 0);
  }
  h = nn::conv1d(h, model.params.at(prefix + ".output.weight"), model.params.at(prefix + ".output.bias"), 1, 0);
  return nn::reshape(h, {h.dim(1)});
}

template <typename T>
Tensor<T> predict_inaccessible(const Model<T>& model, const Tensor<T>& features, const ForwardContext& ctx) {
  const auto& c = model.config;
  require(c.has_aux_head(), ErrorCode::kContract,
          "variant " + std::string(to_string(c.variant)) + " has no inaccessible-variable head");
  Tensor<T> h = features;
  for (std::size_t j = 0; j < c.aux_strides.size(); ++j)
    h = upsample_layer(model, h, layer_name("aux.decoder", j), c.aux_strides[j], ctx);
  return nn::conv1d(h, model.params.at("aux.output.weight"), model.params.at("aux.output.bias"), 1, 0);
}

template <typename T>
std::vector<std::uint8_t> argmax_classes(const Tensor<T>& logits) {
  require(logits.rank() == 2, ErrorCode::kDimension, "argmax_classes: expected logits[C, T]");
  const std::size_t classes = logits.dim(0), len = logits.dim(1);
  const auto& v = logits.values();
  std::vector<std::uint8_t> out(len, 0);
  for (std::size_t t = 0; t < len; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k)
      if (v[k * len + t] > v[best * len + t]) best = k;
    out[t] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
Tensor<T> combine_heads(const Tensor<T>& per_head, std::span<const int> s) {
  require(per_head.rank() == 2, ErrorCode::kDimension, "combine_heads: expected per_head[N, T]");
  const std::size_t n = per_head.dim(0);
  require(s.size() == per_head.dim(1), ErrorCode::kDimension, "combine_heads: gate series length mismatch");
  std::vector<int> rows(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) {
    require(s[t] >= 1 && static_cast<std::size_t>(s[t]) <= n, ErrorCode::kGateStatus,
            "gate status " + std::to_string(s[t]) + " at t=" + std::to_string(t) + " outside 1.." + std::to_string(n));
    rows[t] = s[t] - 1;
  }
  return nn::select_rows(per_head, std::span<const int>(rows));
}

template <typename T>
Prediction<T> forward(const Model<T>& model, const Tensor<T>& breathing_input, int v, std::span<const std::uint8_t> u,
                      const gate::GateMap* gate, const ForwardContext& ctx) {
  const auto& c = model.config;
  const bool gated = c.variant == Variant::kGated;
  require(!gated || gate != nullptr, ErrorCode::kConfig, "gated model needs a gate map");
  if (gated)
    require(gate->n_heads == c.n_gate_heads, ErrorCode::kConfig,
            "gate map has " + std::to_string(gate->n_heads) + " heads, model has " + std::to_string(c.n_gate_heads));

  Tensor<T> x = breathing_input;
  if (c.variant == Variant::kVarAug && x.dim(0) == 1) {
    const double denom = c.v_states > 1 ? static_cast<double>(c.v_states - 1) : 1.0;
    const auto level = Tensor<T>::full({1, x.dim(1)}, static_cast<T>(static_cast<double>(v) / denom));
    x = nn::concat(std::vector<Tensor<T>>{x, level}, 0);
  }
  const Encoded<T> encoded = encode(model, x, ctx);

  const bool train = ctx.mode == nn::Mode::kTrain;
  const bool teacher_gate = gated && (ctx.gate_source == GateSource::kTruth ||
                                      (ctx.gate_source == GateSource::kAuto && train && !u.empty()));
  require(!teacher_gate || !u.empty(), ErrorCode::kContract, "gate from truth requested without a u series");
  const bool need_aux = c.has_aux_head() && (!train || c.lambda_u > 0.0 || (gated && !teacher_gate));

  Prediction<T> out;
  if (need_aux) out.u_logits = predict_inaccessible(model, encoded.features, ctx);

  std::vector<Tensor<T>> heads;
  for (std::size_t h = 1; h <= c.n_heads(); ++h) {
    const auto y = decode_head(model, h, encoded, ctx);
    heads.push_back(nn::reshape(y, {1, y.numel()}));
  }
  out.per_head = heads.size() == 1 ? heads.front() : nn::concat(heads, 0);

  if (!gated) {
    out.y_hat = nn::reshape(out.per_head, {out.per_head.dim(1)});
    return out;
  }
  if (teacher_gate) {
    require(u.size() == out.per_head.dim(1), ErrorCode::kDimension, "u series length does not match f_o*T");
    out.gate = gate->lookup_series(v, u);
  } else {
    const auto u_hat = argmax_classes(*out.u_logits);
    out.gate = gate->lookup_series(v, u_hat);
  }
  out.y_hat = combine_heads(out.per_head, std::span<const int>(out.gate));
  return out;
}

template <typename T>
LossTerms<T> loss_main(const Tensor<T>& y_hat, std::span<const T> y, double lambda, std::span<const std::uint8_t> mask) {
  require(y_hat.numel() == y.size(), ErrorCode::kDimension,
          "loss: prediction length " + std::to_string(y_hat.numel()) + " vs target " + std::to_string(y.size()));
  require(y.size() >= 2, ErrorCode::kLength, "loss needs at least two timesteps");
  LossTerms<T> out;
  const auto l1 = nn::masked_l1(y_hat, y, mask);
  const auto corr = nn::masked_pearson(y_hat, y, mask, kCorrEps);
  out.l1 = static_cast<double>(l1.item());
  out.corr = static_cast<double>(corr.item());
  out.total = lambda == 0.0 ? l1 : nn::sub(l1, nn::scale(corr, static_cast<T>(lambda)));
  return out;
}

template <typename T>
LossTerms<T> loss_gbu(const Tensor<T>& y_hat, const Tensor<T>& u_logits, std::span<const T> y,
                      std::span<const std::uint8_t> u, double lambda, double lambda_u) {
  LossTerms<T> out = loss_main(y_hat, y, lambda);
  if (lambda_u == 0.0) return out;
  require(u_logits.rank() == 2 && u_logits.dim(1) == y.size() && u.size() == y.size(), ErrorCode::kDimension,
          "loss_gbu: logits/labels length mismatch");
  const auto ce = nn::cross_entropy_sum(u_logits, u, gate::kMissingU);
  const double per_step = 1.0 / static_cast<double>(y.size());
  out.ce = static_cast<double>(ce.item()) * per_step;
  out.total = nn::add(out.total, nn::scale(ce, static_cast<T>(lambda_u * per_step)));
  return out;
}

template <typename T>
LossTerms<T> variant_loss(const Model<T>& model, const Prediction<T>& prediction, std::span<const T> y,
                          std::span<const std::uint8_t> u) {
  const auto& c = model.config;
  if (c.has_aux_head() && c.lambda_u > 0.0) {
    require(prediction.u_logits.has_value(), ErrorCode::kContract, "prediction lacks u_logits");
    require(!u.empty(), ErrorCode::kContract, "variant " + std::string(to_string(c.variant)) + " needs u labels");
    return loss_gbu(prediction.y_hat, *prediction.u_logits, y, u, c.lambda, c.lambda_u);
  }
  return loss_main(prediction.y_hat, y, c.lambda);
}

#define GBU_INSTANTIATE_MODEL(T)                                                                                   \
  template Model<T> build_model<T>(const ModelConfig&, std::uint64_t);                                            \
  template Tensor<T> make_input<T>(const ModelConfig&, std::span<const float>, int);                              \
  template Encoded<T> encode<T>(const Model<T>&, const Tensor<T>&, const ForwardContext&);                        \
  template Tensor<T> decode_head<T>(const Model<T>&, std::size_t, const Encoded<T>&, const ForwardContext&);      \
  template Tensor<T> predict_inaccessible<T>(const Model<T>&, const Tensor<T>&, const ForwardContext&);           \
  template std::vector<std::uint8_t> argmax_classes<T>(const Tensor<T>&);                                         \
  template Tensor<T> combine_heads<T>(const Tensor<T>&, std::span<const int>);                                    \
  template Prediction<T> forward<T>(const Model<T>&, const Tensor<T>&, int, std::span<const std::uint8_t>,        \
                                    const gate::GateMap*, const ForwardContext&);                                 \
  template LossTerms<T> loss_main<T>(const Tensor<T>&, std::span<const T>, double, std::span<const std::uint8_t>); \
  template LossTerms<T> loss_gbu<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,                       \
                                    std::span<const std::uint8_t>, double, double);                               \
  template LossTerms<T> variant_loss<T>(const Model<T>&, const Prediction<T>&, std::span<const T>,                \
                                        std::span<const std::uint8_t>);

GBU_INSTANTIATE_MODEL(float)
GBU_INSTANTIATE_MODEL(double)

}  // namespace gbu::model
