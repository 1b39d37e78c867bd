#include <algorithm>
#include <cmath>

#include "gbu/nn/ops.hpp"

namespace gbu::nn {

namespace {

bool selected(std::span<const std::uint8_t> mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

template <typename T>
void check_target(const Tensor<T>& prediction, std::span<const T> target, std::span<const std::uint8_t> mask,
                  const char* op) {
  require(prediction.numel() == target.size(), ErrorCode::kLength,
          std::string(op) + ": prediction length " + std::to_string(prediction.numel()) + " vs target length " +
              std::to_string(target.size()));
  require(mask.empty() || mask.size() == target.size(), ErrorCode::kLength, std::string(op) + ": mask length");
}

}  // namespace

template <typename T>
Tensor<T> masked_l1(const Tensor<T>& prediction, std::span<const T> target, std::span<const std::uint8_t> mask) {
  check_target(prediction, target, mask, "masked_l1");
  const auto& p = prediction.values();
  std::size_t count = 0;
  T total{0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!selected(mask, i)) continue;
    total += std::abs(p[i] - target[i]);
    ++count;
  }
  require(count > 0, ErrorCode::kEmptyInput, "masked_l1: no selected positions");
  const T inv = T{1} / static_cast<T>(count);
  std::vector<T> tgt(target.begin(), target.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  auto pp = prediction.node_ptr();
  return make_result<T>({1}, {total * inv}, {pp},
                        [pp, tgt = std::move(tgt), msk = std::move(msk), inv](const TensorNode<T>& self) {
                          T* g = pp->grad_data();
                          const T up = self.grad[0] * inv;
                          for (std::size_t i = 0; i < tgt.size(); ++i) {
                            if (!selected(msk, i)) continue;
                            const T d = pp->value[i] - tgt[i];
                            if (d > T{0}) g[i] += up;
                            else if (d < T{0}) g[i] -= up;
                          }
                        });
}

template <typename T>
Tensor<T> masked_pearson(const Tensor<T>& prediction, std::span<const T> target,
                         std::span<const std::uint8_t> mask, double eps) {
  check_target(prediction, target, mask, "masked_pearson");
  const auto& p = prediction.values();
  std::size_t count = 0;
  T mp{0}, mt{0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!selected(mask, i)) continue;
    mp += p[i];
    mt += target[i];
    ++count;
  }
  require(count > 0, ErrorCode::kEmptyInput, "masked_pearson: no selected positions");
  mp /= static_cast<T>(count);
  mt /= static_cast<T>(count);
  T sxy{0}, sxx{0}, syy{0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!selected(mask, i)) continue;
    const T dp = p[i] - mp, dt = target[i] - mt;
    sxy += dp * dt;
    sxx += dp * dp;
    syy += dt * dt;
  }
  const T denom = std::sqrt(sxx * syy + static_cast<T>(eps));
  const T r = sxy / denom;

  std::vector<T> tgt(target.begin(), target.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  auto pp = prediction.node_ptr();
  return make_result<T>(
      {1}, {r}, {pp},
      [pp, tgt = std::move(tgt), msk = std::move(msk), mp, mt, sxy, syy, denom](const TensorNode<T>& self) {
        // dr/dp_i = dt_i / D - sxy * syy * dp_i / D^3 (the centering terms vanish).
        T* g = pp->grad_data();
        const T up = self.grad[0];
        const T d3 = denom * denom * denom;
        for (std::size_t i = 0; i < tgt.size(); ++i) {
          if (!selected(msk, i)) continue;
          const T dp = pp->value[i] - mp, dt = tgt[i] - mt;
          g[i] += up * (dt / denom - sxy * syy * dp / d3);
        }
      });
}

template <typename T>
Tensor<T> cross_entropy_sum(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                            std::uint8_t ignore_label) {
  require(logits.rank() == 2, ErrorCode::kDimension,
          "cross_entropy_sum: expected logits[C,T], got " + shape_string(logits.shape()));
  const std::size_t classes = logits.dim(0), steps = logits.dim(1);
  require(labels.size() == steps, ErrorCode::kLength, "cross_entropy_sum: label count mismatch");
  const auto& z = logits.values();
  // softmax probabilities per column, kept for backward
  auto probs = std::make_shared<std::vector<T>>(z.size());
  T total{0};
  for (std::size_t t = 0; t < steps; ++t) {
    const std::uint8_t label = labels[t];
    if (label == ignore_label) continue;
    require(label < classes, ErrorCode::kLabel,
            "cross_entropy_sum: label " + std::to_string(label) + " at t=" + std::to_string(t) + " with " +
                std::to_string(classes) + " classes");
    T mx = z[t];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, z[c * steps + t]);
    T acc{0};
    for (std::size_t c = 0; c < classes; ++c) acc += std::exp(z[c * steps + t] - mx);
    const T lse = mx + std::log(acc);
    total += lse - z[label * steps + t];
    for (std::size_t c = 0; c < classes; ++c) (*probs)[c * steps + t] = std::exp(z[c * steps + t] - lse);
  }
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  auto pz = logits.node_ptr();
  return make_result<T>({1}, {total}, {pz},
                        [pz, probs, lab = std::move(lab), classes, steps, ignore_label](const TensorNode<T>& self) {
                          T* g = pz->grad_data();
                          const T up = self.grad[0];
                          for (std::size_t t = 0; t < steps; ++t) {
                            if (lab[t] == ignore_label) continue;
                            for (std::size_t c = 0; c < classes; ++c) {
                              const T target = c == lab[t] ? T{1} : T{0};
                              g[c * steps + t] += up * ((*probs)[c * steps + t] - target);
                            }
                          }
                        });
}

#define GBU_INSTANTIATE_LOSS(T)                                                                                  \
  template Tensor<T> masked_l1<T>(const Tensor<T>&, std::span<const T>, std::span<const std::uint8_t>);         \
  template Tensor<T> masked_pearson<T>(const Tensor<T>&, std::span<const T>, std::span<const std::uint8_t>,     \
                                       double);                                                                 \
  template Tensor<T> cross_entropy_sum<T>(const Tensor<T>&, std::span<const std::uint8_t>, std::uint8_t);

GBU_INSTANTIATE_LOSS(float)
GBU_INSTANTIATE_LOSS(double)

}  // namespace gbu::nn
