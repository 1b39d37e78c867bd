#include <algorithm>
#include <cmath>

#include "gbu/nn/ops.hpp"

namespace gbu::nn {

namespace {

// Range [lo, hi) of output positions o for which o*stride + offset lands in [0, extent).
struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

Range valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t extent, std::size_t count) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t lo = 0;
  if (offset < 0) lo = (-offset + s - 1) / s;
  // largest o with o*s + offset <= extent - 1
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(extent) - 1 - offset;
  if (top < 0) return {};
  std::ptrdiff_t hi = top / s + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(count));
  if (hi <= lo) return {};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
  require(x.rank() == 2 && weight.rank() == 3, ErrorCode::kDimension,
          "conv1d: expected x[C_in,L] and weight[C_out,C_in,k], got " + shape_string(x.shape()) + " and " +
              shape_string(weight.shape()));
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = weight.dim(0), k = weight.dim(2);
  require(weight.dim(1) == c_in, ErrorCode::kDimension,
          "conv1d: input has " + std::to_string(c_in) + " channels, weight expects " + std::to_string(weight.dim(1)));
  require(bias.numel() == c_out, ErrorCode::kDimension, "conv1d: bias length mismatch");
  require(stride > 0, ErrorCode::kContract, "conv1d: stride must be positive");
  require(len + 2 * padding >= k, ErrorCode::kLength, "conv1d: input shorter than kernel");
  const std::size_t out_len = (len + 2 * padding - k) / stride + 1;

  const T* xv = x.values().data();
  const T* wv = weight.values().data();
  std::vector<T> out(c_out * out_len);
  for (std::size_t co = 0; co < c_out; ++co)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(co * out_len), out_len, bias.values()[co]);

  for (std::size_t co = 0; co < c_out; ++co) {
    T* orow = out.data() + co * out_len;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const T* xrow = xv + ci * len;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T w = wv[(co * c_in + ci) * k + kk];
        const auto offset = static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(padding);
        const Range r = valid_range(offset, stride, len, out_len);
        if (stride == 1) {
          for (std::size_t o = r.lo; o < r.hi; ++o) orow[o] += w * xrow[static_cast<std::ptrdiff_t>(o) + offset];
        } else {
          for (std::size_t o = r.lo; o < r.hi; ++o) orow[o] += w * xrow[o * stride + offset];
        }
      }
    }
  }

  auto px = x.node_ptr(), pw = weight.node_ptr(), pb = bias.node_ptr();
  return make_result<T>(
      {c_out, out_len}, std::move(out), {px, pw, pb},
      [px, pw, pb, c_in, c_out, len, k, out_len, stride, padding](const TensorNode<T>& self) {
        const T* g = self.grad.data();
        if (pb->requires_grad) {
          T* gb = pb->grad_data();
          for (std::size_t co = 0; co < c_out; ++co) {
            T acc{0};
            for (std::size_t o = 0; o < out_len; ++o) acc += g[co * out_len + o];
            gb[co] += acc;
          }
        }
        T* gx = px->requires_grad ? px->grad_data() : nullptr;
        T* gw = pw->requires_grad ? pw->grad_data() : nullptr;
        const T* xv = px->value.data();
        const T* wv = pw->value.data();
        for (std::size_t co = 0; co < c_out; ++co) {
          const T* grow = g + co * out_len;
          for (std::size_t ci = 0; ci < c_in; ++ci) {
            const T* xrow = xv + ci * len;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const std::size_t widx = (co * c_in + ci) * k + kk;
              const auto offset = static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(padding);
              const Range r = valid_range(offset, stride, len, out_len);
              if (gw) {
                T acc{0};
                for (std::size_t o = r.lo; o < r.hi; ++o) acc += grow[o] * xrow[o * stride + offset];
                gw[widx] += acc;
              }
              if (gx) {
                const T w = wv[widx];
                T* gxrow = gx + ci * len;
                for (std::size_t o = r.lo; o < r.hi; ++o) gxrow[o * stride + offset] += w * grow[o];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding) {
  require(x.rank() == 2 && weight.rank() == 3, ErrorCode::kDimension,
          "conv_transpose1d: expected x[C_in,L] and weight[C_in,C_out,k], got " + shape_string(x.shape()) +
              " and " + shape_string(weight.shape()));
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = weight.dim(1), k = weight.dim(2);
  require(weight.dim(0) == c_in, ErrorCode::kDimension,
          "conv_transpose1d: input has " + std::to_string(c_in) + " channels, weight expects " +
              std::to_string(weight.dim(0)));
  require(bias.numel() == c_out, ErrorCode::kDimension, "conv_transpose1d: bias length mismatch");
  require(stride > 0, ErrorCode::kContract, "conv_transpose1d: stride must be positive");
  require((len - 1) * stride + k > 2 * padding, ErrorCode::kLength, "conv_transpose1d: empty output");
  const std::size_t out_len = (len - 1) * stride + k - 2 * padding;

  const T* xv = x.values().data();
  const T* wv = weight.values().data();
  std::vector<T> out(c_out * out_len);
  for (std::size_t co = 0; co < c_out; ++co)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(co * out_len), out_len, bias.values()[co]);

  for (std::size_t ci = 0; ci < c_in; ++ci) {
    const T* xrow = xv + ci * len;
    for (std::size_t co = 0; co < c_out; ++co) {
      T* orow = out.data() + co * out_len;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T w = wv[(ci * c_out + co) * k + kk];
        const auto offset = static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(padding);
        const Range r = valid_range(offset, stride, out_len, len);
        for (std::size_t i = r.lo; i < r.hi; ++i) orow[i * stride + offset] += w * xrow[i];
      }
    }
  }

  auto px = x.node_ptr(), pw = weight.node_ptr(), pb = bias.node_ptr();
  return make_result<T>(
      {c_out, out_len}, std::move(out), {px, pw, pb},
      [px, pw, pb, c_in, c_out, len, k, out_len, stride, padding](const TensorNode<T>& self) {
        const T* g = self.grad.data();
        if (pb->requires_grad) {
          T* gb = pb->grad_data();
          for (std::size_t co = 0; co < c_out; ++co) {
            T acc{0};
            for (std::size_t o = 0; o < out_len; ++o) acc += g[co * out_len + o];
            gb[co] += acc;
          }
        }
        T* gx = px->requires_grad ? px->grad_data() : nullptr;
        T* gw = pw->requires_grad ? pw->grad_data() : nullptr;
        const T* xv = px->value.data();
        const T* wv = pw->value.data();
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const T* xrow = xv + ci * len;
          for (std::size_t co = 0; co < c_out; ++co) {
            const T* grow = g + co * out_len;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const std::size_t widx = (ci * c_out + co) * k + kk;
              const auto offset = static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(padding);
              const Range r = valid_range(offset, stride, out_len, len);
              if (gw) {
                T acc{0};
                for (std::size_t i = r.lo; i < r.hi; ++i) acc += xrow[i] * grow[i * stride + offset];
                gw[widx] += acc;
              }
              if (gx) {
                const T w = wv[widx];
                T* gxrow = gx + ci * len;
                for (std::size_t i = r.lo; i < r.hi; ++i) gxrow[i] += w * grow[i * stride + offset];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> batch_norm1d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormState<T>& state, BatchNormOptions options, Mode mode) {
  require(options.eps > 0.0, ErrorCode::kContract, "batch_norm1d: eps must be positive");
  require(x.rank() == 2, ErrorCode::kDimension, "batch_norm1d: expected x[C,L], got " + shape_string(x.shape()));
  const std::size_t channels = x.dim(0), len = x.dim(1);
  require(len > 0, ErrorCode::kEmptyInput, "batch_norm1d: empty input");
  require(gamma.numel() == channels && beta.numel() == channels && state.running_mean.numel() == channels &&
              state.running_var.numel() == channels,
          ErrorCode::kDimension, "batch_norm1d: per-channel parameter length mismatch");

  const T* xv = x.values().data();
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(channels);
  std::vector<T> out(x.numel());
  const T eps = static_cast<T>(options.eps);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* row = xv + c * len;
    T mu, var;
    if (mode == Mode::kTrain) {
      mu = T{0};
      for (std::size_t i = 0; i < len; ++i) mu += row[i];
      mu /= static_cast<T>(len);
      var = T{0};
      for (std::size_t i = 0; i < len; ++i) var += (row[i] - mu) * (row[i] - mu);
      var /= static_cast<T>(len);
      const T m = static_cast<T>(options.momentum);
      const T unbiased = len > 1 ? var * static_cast<T>(len) / static_cast<T>(len - 1) : var;
      auto rm = state.running_mean.mutable_data();
      auto rv = state.running_var.mutable_data();
      rm[c] = (T{1} - m) * rm[c] + m * mu;
      rv[c] = (T{1} - m) * rv[c] + m * unbiased;
    } else {
      mu = state.running_mean.values()[c];
      var = state.running_var.values()[c];
    }
    const T rs = T{1} / std::sqrt(var + eps);
    (*rstd)[c] = rs;
    const T gm = gamma.values()[c], bt = beta.values()[c];
    for (std::size_t i = 0; i < len; ++i) {
      const T h = (row[i] - mu) * rs;
      (*xhat)[c * len + i] = h;
      out[c * len + i] = gm * h + bt;
    }
  }

  auto px = x.node_ptr(), pg = gamma.node_ptr(), pb = beta.node_ptr();
  const bool batch_stats = mode == Mode::kTrain;
  return make_result<T>(x.shape(), std::move(out), {px, pg, pb},
                        [px, pg, pb, xhat, rstd, channels, len, batch_stats](const TensorNode<T>& self) {
                          const T* g = self.grad.data();
                          const auto& h = *xhat;
                          for (std::size_t c = 0; c < channels; ++c) {
                            T sum_g{0}, sum_gh{0};
                            for (std::size_t i = 0; i < len; ++i) {
                              sum_g += g[c * len + i];
                              sum_gh += g[c * len + i] * h[c * len + i];
                            }
                            if (pg->requires_grad) pg->grad_data()[c] += sum_gh;
                            if (pb->requires_grad) pb->grad_data()[c] += sum_g;
                            if (!px->requires_grad) continue;
                            T* gx = px->grad_data() + c * len;
                            const T scale_c = pg->value[c] * (*rstd)[c];
                            if (batch_stats) {
                              const T mean_g = sum_g / static_cast<T>(len);
                              const T mean_gh = sum_gh / static_cast<T>(len);
                              for (std::size_t i = 0; i < len; ++i)
                                gx[i] += scale_c * (g[c * len + i] - mean_g - h[c * len + i] * mean_gh);
                            } else {
                              for (std::size_t i = 0; i < len; ++i) gx[i] += scale_c * g[c * len + i];
                            }
                          }
                        });
}

#define GBU_INSTANTIATE_CONV(T)                                                                                 \
  template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> conv_transpose1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,     \
                                         std::size_t);                                                          \
  template Tensor<T> batch_norm1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&,  \
                                     BatchNormOptions, Mode);

GBU_INSTANTIATE_CONV(float)
GBU_INSTANTIATE_CONV(double)

}  // namespace gbu::nn
