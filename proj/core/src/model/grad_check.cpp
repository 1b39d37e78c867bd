#include "gbu/model/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "gbu/model/model.hpp"

namespace gbu::model {

namespace {

struct Fixture {
  ModelConfig config;
  std::size_t len = 0;
  std::vector<float> breathing;
  std::vector<double> y;
  std::vector<std::uint8_t> u;
  std::vector<int> gate;
  int v = 1;
};

Fixture make_fixture(Variant variant, std::uint64_t seed) {
  Fixture f;
  f.config = tiny_config(variant);
  const std::size_t seconds = 48;
  f.len = seconds * static_cast<std::size_t>(f.config.f_o);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::normal_distribution<double> noise;
  f.breathing.resize(seconds * static_cast<std::size_t>(f.config.f_b));
  for (float& b : f.breathing) b = static_cast<float>(noise(rng));
  // Targets well above the initial predictions keep the L1 term away from its kink.
  f.y.resize(f.len);
  for (std::size_t t = 0; t < f.len; ++t) f.y[t] = 2.0 + 0.1 * std::sin(0.3 * static_cast<double>(t));
  f.u.resize(f.len);
  f.gate.resize(f.len);
  for (std::size_t t = 0; t < f.len; ++t) {
    f.u[t] = static_cast<std::uint8_t>(rng() % f.config.u_classes);
    f.gate[t] = 1 + static_cast<int>(rng() % f.config.n_heads());
  }
  return f;
}

// Brings running statistics to the data scale; with the initial unit variance
// the eval-mode activations shrink towards the RReLU kink layer by layer.
template <typename T>
void calibrate(const Model<T>& model, const Fixture& f, std::uint64_t seed) {
  nn::NoGradGuard no_grad;
  const auto x = make_input<T>(f.config, f.breathing, f.v);
  std::mt19937_64 act_rng(seed);
  const ForwardContext warm{nn::Mode::kTrain, &act_rng, GateSource::kTruth};
  const auto identity = gate::identity_gate_map(f.config.v_states, f.config.u_classes);
  for (int pass = 0; pass < 60; ++pass)
    forward(model, x, f.v, std::span<const std::uint8_t>(f.u), &identity, warm);
}

template <typename T>
std::function<nn::Tensor<T>()> make_loss(const Model<T>& model, const Fixture& f) {
  auto x = make_input<T>(f.config, f.breathing, f.v);
  auto y = std::make_shared<std::vector<T>>(f.y.begin(), f.y.end());
  return [&model, &f, x, y]() {
    const ForwardContext ctx{nn::Mode::kEval, nullptr};
    const auto& config = model.config;
    const auto encoded = encode(model, x, ctx);
    nn::Tensor<T> y_hat;
    if (config.variant == Variant::kGated) {
      std::vector<nn::Tensor<T>> heads;
      for (std::size_t h = 1; h <= config.n_heads(); ++h)
        heads.push_back(nn::reshape(decode_head(model, h, encoded, ctx), {1, f.len}));
      y_hat = combine_heads(nn::concat(heads, 0), std::span<const int>(f.gate));
    } else {
      y_hat = decode_head(model, 1, encoded, ctx);
    }
    if (config.has_aux_head()) {
      const auto logits = predict_inaccessible(model, encoded.features, ctx);
      return loss_gbu(y_hat, logits, std::span<const T>(*y), std::span<const std::uint8_t>(f.u), config.lambda,
                      config.lambda_u)
          .total;
    }
    return loss_main(y_hat, std::span<const T>(*y), config.lambda).total;
  };
}

nn::GradCheckEntry check_f64(Variant variant, const ModelCheckOptions& options) {
  const Fixture f = make_fixture(variant, options.seed);
  const auto model = build_model<double>(f.config, options.seed);
  calibrate(model, f, options.seed);
  std::vector<nn::Tensor<double>> inputs;
  for (const auto& name : model.params.trainable_names()) inputs.push_back(model.params.at(name));
  const auto result = nn::grad_check<double>(make_loss(model, f), inputs, 1e-6, options.coords_per_tensor,
                                             options.seed);
  return {"model_" + std::string(to_string(variant)), "f64", 1, result.max_rel_error, options.tolerance_f64,
          result.kinks};
}

// The float gradients are compared with differences of the same weights
// evaluated in double; float differences through the full stack carry more
// rounding error than the tolerance allows.
nn::GradCheckEntry check_f32(Variant variant, const ModelCheckOptions& options) {
  const Fixture f = make_fixture(variant, options.seed);
  const auto model = build_model<float>(f.config, options.seed);
  calibrate(model, f, options.seed);
  const Model<double> reference{model.config, model.params.cast<double>()};

  const auto names = model.params.trainable_names();
  for (const auto& name : names) model.params.at(name).zero_grad();
  make_loss(model, f)().backward();
  const auto ref_loss = make_loss(reference, f);

  const double eps = 1e-6;
  double worst = 0.0;
  std::size_t kinks = 0;
  std::mt19937_64 rng(options.seed);
  nn::NoGradGuard no_grad;
  for (const auto& name : names) {
    const auto& param = model.params.at(name);
    nn::Tensor<double> shadow = reference.params.at(name);
    auto values = shadow.mutable_data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.coords_per_tensor > 0 && coords.size() > options.coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const double original = values[i];
      const auto d = nn::stencil_derivative(
          [&](double at) {
            values[i] = at;
            return ref_loss().item();
          },
          original, eps);
      values[i] = original;
      kinks += d.kink ? 1 : 0;
      const double analytic = param.has_grad() ? static_cast<double>(param.grad()[i]) : 0.0;
      worst = std::max(worst, nn::relative_error(analytic, d.value));
    }
    param.zero_grad();
  }
  return {"model_" + std::string(to_string(variant)), "f32", 1, worst, options.tolerance_f32, kinks};
}

}  // namespace

std::vector<nn::GradCheckEntry> model_gradcheck_suite(const ModelCheckOptions& options) {
  std::vector<nn::GradCheckEntry> out;
  for (Variant v : {Variant::kBackbone, Variant::kCnn, Variant::kVarAug, Variant::kGated}) {
    out.push_back(check_f64(v, options));
    out.push_back(check_f32(v, options));
  }
  return out;
}

}  // namespace gbu::model
