#include "gbu/train/adam.hpp"

#include <cmath>

namespace gbu::train {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::size_t t,
                 const AdamOptions& o) {
  require(param.size() == grad.size() && m.size() == param.size() && v.size() == param.size(),
          ErrorCode::kDimension, "adam: parameter, gradient and moment sizes differ");
  require(t >= 1, ErrorCode::kContract, "adam: step count starts at 1");
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(o.beta1, static_cast<double>(t)));
  const T c2 = static_cast<T>(1.0 - std::pow(o.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(o.lr), eps = static_cast<T>(o.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T{1} - b1) * g;
    v[i] = b2 * v[i] + (T{1} - b2) * g * g;
    const T m_hat = m[i] / c1;
    const T v_hat = v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
void adam_step(const model::ParamSet<T>& params, AdamState<T>& state) {
  const std::size_t t = state.step + 1;
  for (const auto& [name, e] : params) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    const auto g = e.tensor.grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      require(std::isfinite(static_cast<double>(g[i])), ErrorCode::kNonFinite,
              "non-finite gradient at " + name + "[" + std::to_string(i) + "], step " + std::to_string(t));
  }
  state.step = t;
  for (const auto& [name, e] : params) {
    if (!e.trainable) continue;
    const std::size_t n = e.tensor.numel();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(n, T{0});
    if (v.empty()) v.assign(n, T{0});
    nn::Tensor<T> tensor = e.tensor;
    if (tensor.has_grad()) {
      adam_update<T>(tensor.mutable_data(), tensor.grad(), m, v, t, state.options);
    } else {
      const std::vector<T> zero(n, T{0});
      adam_update<T>(tensor.mutable_data(), zero, m, v, t, state.options);
    }
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::size_t, const AdamOptions&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                  std::size_t, const AdamOptions&);
template void adam_step<float>(const model::ParamSet<float>&, AdamState<float>&);
template void adam_step<double>(const model::ParamSet<double>&, AdamState<double>&);

}  // namespace gbu::train
