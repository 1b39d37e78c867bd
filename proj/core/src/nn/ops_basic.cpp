#include <algorithm>
#include <cmath>
#include <numbers>

#include "gbu/nn/ops.hpp"

namespace gbu::nn {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kDimension,
          std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename T>
void require_rank2(const Tensor<T>& x, const char* op) {
  require(x.rank() == 2, ErrorCode::kDimension,
          std::string(op) + ": expected rank-2 tensor, got " + shape_string(x.shape()));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](const TensorNode<T>& self) {
    for (auto* p : {pa.get(), pb.get()}) {
      if (!p->requires_grad) continue;
      T* g = p->grad_data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](const TensorNode<T>& self) {
    if (pa->requires_grad) {
      T* g = pa->grad_data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      T* g = pb->grad_data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](const TensorNode<T>& self) {
    if (pa->requires_grad) {
      T* g = pa->grad_data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      T* g = pb->grad_data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values());
  for (T& v : out) v *= factor;
  auto pa = a.node_ptr();
  return make_result<T>(a.shape(), std::move(out), {pa}, [pa, factor](const TensorNode<T>& self) {
    T* g = pa->grad_data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total{0};
  for (T v : x.values()) total += v;
  auto px = x.node_ptr();
  return make_result<T>({1}, {total}, {px}, [px](const TensorNode<T>& self) {
    T* g = px->grad_data();
    for (std::size_t i = 0; i < px->value.size(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights) {
  require(weights.size() == x.numel(), ErrorCode::kDimension, "weighted_sum: weight count mismatch");
  T total{0};
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * weights[i];
  auto px = x.node_ptr();
  std::vector<T> w(weights.begin(), weights.end());
  return make_result<T>({1}, {total}, {px}, [px, w = std::move(w)](const TensorNode<T>& self) {
    T* g = px->grad_data();
    for (std::size_t i = 0; i < w.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), ErrorCode::kDimension,
          "reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  auto px = x.node_ptr();
  return make_result<T>(std::move(shape), x.values(), {px}, [px](const TensorNode<T>& self) {
    T* g = px->grad_data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank2(x, "transpose");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(x.numel());
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = xv[r * cols + c];
  auto px = x.node_ptr();
  return make_result<T>({cols, rows}, std::move(out), {px}, [px, rows, cols](const TensorNode<T>& self) {
    T* g = px->grad_data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
  });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_rank2(x, "narrow");
  require(axis < 2, ErrorCode::kContract, "narrow: axis must be 0 or 1");
  require(length > 0 && start + length <= x.dim(axis), ErrorCode::kDimension,
          "narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
              ") outside extent " + std::to_string(x.dim(axis)));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const std::size_t out_rows = axis == 0 ? length : rows;
  const std::size_t out_cols = axis == 1 ? length : cols;
  const std::size_t r0 = axis == 0 ? start : 0;
  const std::size_t c0 = axis == 1 ? start : 0;
  std::vector<T> out(out_rows * out_cols);
  const auto& xv = x.values();
  for (std::size_t r = 0; r < out_rows; ++r)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((r + r0) * cols + c0), out_cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * out_cols));
  auto px = x.node_ptr();
  return make_result<T>({out_rows, out_cols}, std::move(out), {px},
                        [px, out_rows, out_cols, cols, r0, c0](const TensorNode<T>& self) {
                          T* g = px->grad_data();
                          for (std::size_t r = 0; r < out_rows; ++r)
                            for (std::size_t c = 0; c < out_cols; ++c)
                              g[(r + r0) * cols + c + c0] += self.grad[r * out_cols + c];
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  require(!parts.empty(), ErrorCode::kContract, "concat: no inputs");
  require(axis < 2, ErrorCode::kContract, "concat: axis must be 0 or 1");
  const std::size_t other = 1 - axis;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat");
    require(p.dim(other) == parts.front().dim(other), ErrorCode::kDimension,
            "concat: mismatched extent " + shape_string(p.shape()) + " vs " + shape_string(parts.front().shape()));
    total += p.dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : parts.front().dim(0);
  const std::size_t cols = axis == 1 ? total : parts.front().dim(1);
  std::vector<T> out(rows * cols);
  std::vector<NodePtr<T>> nodes;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pr = p.dim(0), pc = p.dim(1);
    const auto& pv = p.values();
    for (std::size_t r = 0; r < pr; ++r)
      for (std::size_t c = 0; c < pc; ++c) {
        const std::size_t orow = axis == 0 ? r + offset : r;
        const std::size_t ocol = axis == 1 ? c + offset : c;
        out[orow * cols + ocol] = pv[r * pc + c];
      }
    nodes.push_back(p.node_ptr());
    offsets.push_back(offset);
    offset += p.dim(axis);
  }
  auto captured = nodes;
  return make_result<T>({rows, cols}, std::move(out), std::move(nodes),
                        [captured, offsets, axis, cols](const TensorNode<T>& self) {
                          for (std::size_t k = 0; k < captured.size(); ++k) {
                            auto& p = *captured[k];
                            if (!p.requires_grad) continue;
                            T* g = p.grad_data();
                            const std::size_t pr = p.shape[0], pc = p.shape[1];
                            for (std::size_t r = 0; r < pr; ++r)
                              for (std::size_t c = 0; c < pc; ++c) {
                                const std::size_t orow = axis == 0 ? r + offsets[k] : r;
                                const std::size_t ocol = axis == 1 ? c + offsets[k] : c;
                                g[r * pc + c] += self.grad[orow * cols + ocol];
                              }
                          }
                        });
}

namespace {

// c[M,N] += a[M,K] * b[K,N]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[M,N] += a[M,K] * b[N,K]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc{0};
      const T* arow = a + i * k;
      const T* brow = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
}

// c[K,N] += a[M,K]^T * b[M,N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      T* crow = c + p * n;
      const T* brow = b + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  require(a.dim(1) == b.dim(0), ErrorCode::kDimension,
          "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T{0});
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result<T>({m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](const TensorNode<T>& self) {
    if (pa->requires_grad) gemm_nt(self.grad.data(), pb->value.data(), pa->grad_data(), m, n, k);
    if (pb->requires_grad) gemm_tn(pa->value.data(), self.grad.data(), pb->grad_data(), m, k, n);
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  require(a.dim(1) == b.dim(1), ErrorCode::kDimension,
          "matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<T> out(m * n, T{0});
  gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result<T>({m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](const TensorNode<T>& self) {
    // dA = G * B, dB = G^T * A
    if (pa->requires_grad) gemm_nn(self.grad.data(), pb->value.data(), pa->grad_data(), m, n, k);
    if (pb->requires_grad) gemm_tn(self.grad.data(), pa->value.data(), pb->grad_data(), m, n, k);
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank2(x, "linear");
  require_rank2(weight, "linear");
  require(weight.dim(1) == x.dim(1), ErrorCode::kDimension,
          "linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
  require(bias.numel() == weight.dim(0), ErrorCode::kDimension, "linear: bias length mismatch");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  std::vector<T> out(rows * out_dim);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(bias.values().begin(), bias.values().end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_dim));
  gemm_nt(x.values().data(), weight.values().data(), out.data(), rows, in, out_dim);
  auto px = x.node_ptr(), pw = weight.node_ptr(), pb = bias.node_ptr();
  return make_result<T>({rows, out_dim}, std::move(out), {px, pw, pb},
                        [px, pw, pb, rows, in, out_dim](const TensorNode<T>& self) {
                          if (px->requires_grad)
                            gemm_nn(self.grad.data(), pw->value.data(), px->grad_data(), rows, out_dim, in);
                          if (pw->requires_grad)
                            gemm_tn(self.grad.data(), px->value.data(), pw->grad_data(), rows, out_dim, in);
                          if (pb->requires_grad) {
                            T* g = pb->grad_data();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t o = 0; o < out_dim; ++o) g[o] += self.grad[r * out_dim + o];
                          }
                        });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = T{0.5} * xv[i] * (T{1} + std::erf(xv[i] * inv_sqrt2));
  auto px = x.node_ptr();
  return make_result<T>(x.shape(), std::move(out), {px}, [px, inv_sqrt2](const TensorNode<T>& self) {
    const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    T* g = px->grad_data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = px->value[i];
      const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T* o = out.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  auto px = x.node_ptr();
  auto saved = std::make_shared<std::vector<T>>(out);
  return make_result<T>(x.shape(), std::move(out), {px}, [px, saved, rows, cols](const TensorNode<T>& self) {
    T* g = px->grad_data();
    const auto& y = *saved;
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += self.grad[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        g[r * cols + c] += y[r * cols + c] * (self.grad[r * cols + c] - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  require_rank2(x, "layer_norm");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  require(gamma.numel() == d && beta.numel() == d, ErrorCode::kDimension, "layer_norm: affine length mismatch");
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * d;
    T mu{0};
    for (std::size_t c = 0; c < d; ++c) mu += in[c];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<T>(d);
    const T rs = T{1} / std::sqrt(var + static_cast<T>(eps));
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (in[c] - mu) * rs;
      (*xhat)[r * d + c] = h;
      out[r * d + c] = h * gv[c] + bv[c];
    }
  }
  auto px = x.node_ptr(), pg = gamma.node_ptr(), pb = beta.node_ptr();
  return make_result<T>(x.shape(), std::move(out), {px, pg, pb},
                        [px, pg, pb, xhat, rstd, rows, d](const TensorNode<T>& self) {
                          const auto& h = *xhat;
                          if (pg->requires_grad || pb->requires_grad) {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < d; ++c) {
                                if (pg->requires_grad) pg->grad_data()[c] += self.grad[r * d + c] * h[r * d + c];
                                if (pb->requires_grad) pb->grad_data()[c] += self.grad[r * d + c];
                              }
                          }
                          if (!px->requires_grad) return;
                          T* g = px->grad_data();
                          const T inv_d = T{1} / static_cast<T>(d);
                          for (std::size_t r = 0; r < rows; ++r) {
                            T mean_dh{0}, mean_dh_h{0};
                            for (std::size_t c = 0; c < d; ++c) {
                              const T dh = self.grad[r * d + c] * pg->value[c];
                              mean_dh += dh;
                              mean_dh_h += dh * h[r * d + c];
                            }
                            mean_dh *= inv_d;
                            mean_dh_h *= inv_d;
                            for (std::size_t c = 0; c < d; ++c) {
                              const T dh = self.grad[r * d + c] * pg->value[c];
                              g[r * d + c] += (*rstd)[r] * (dh - mean_dh - h[r * d + c] * mean_dh_h);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> rrelu(const Tensor<T>& x, RReluBounds bounds, Mode mode, std::mt19937_64* rng) {
  require(bounds.lower >= 0.0 && bounds.lower <= bounds.upper && bounds.upper < 1.0, ErrorCode::kContract,
          "rrelu: bounds must satisfy 0 <= lower <= upper < 1");
  require(mode == Mode::kEval || rng != nullptr, ErrorCode::kContract, "rrelu: train mode needs an rng");
  const auto& xv = x.values();
  auto slopes = std::make_shared<std::vector<T>>(xv.size(), T{1});
  const T mean_slope = static_cast<T>((bounds.lower + bounds.upper) / 2.0);
  std::uniform_real_distribution<double> dist(bounds.lower, bounds.upper);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (xv[i] >= T{0}) continue;
    (*slopes)[i] = mode == Mode::kEval ? mean_slope : static_cast<T>(dist(*rng));
  }
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * (*slopes)[i];
  auto px = x.node_ptr();
  return make_result<T>(x.shape(), std::move(out), {px}, [px, slopes](const TensorNode<T>& self) {
    T* g = px->grad_data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*slopes)[i];
  });
}

template <typename T>
Tensor<T> select_rows(const Tensor<T>& x, std::span<const int> index) {
  require_rank2(x, "select_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  require(index.size() == cols, ErrorCode::kDimension, "select_rows: index length must equal column count");
  std::vector<int> idx(index.begin(), index.end());
  std::vector<T> out(cols);
  const auto& xv = x.values();
  for (std::size_t t = 0; t < cols; ++t) {
    require(idx[t] >= 0 && static_cast<std::size_t>(idx[t]) < rows, ErrorCode::kGateStatus,
            "select_rows: row " + std::to_string(idx[t]) + " at position " + std::to_string(t));
    out[t] = xv[static_cast<std::size_t>(idx[t]) * cols + t];
  }
  auto px = x.node_ptr();
  return make_result<T>({cols}, std::move(out), {px}, [px, idx = std::move(idx), cols](const TensorNode<T>& self) {
    T* g = px->grad_data();
    for (std::size_t t = 0; t < cols; ++t) g[static_cast<std::size_t>(idx[t]) * cols + t] += self.grad[t];
  });
}

#define GBU_INSTANTIATE_BASIC(T)                                                                   \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                     \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                    \
  template Tensor<T> weighted_sum<T>(const Tensor<T>&, std::span<const T>);                        \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                          \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                               \
  template Tensor<T> narrow<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);           \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                        \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                    \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                            \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);  \
  template Tensor<T> rrelu<T>(const Tensor<T>&, RReluBounds, Mode, std::mt19937_64*);              \
  template Tensor<T> select_rows<T>(const Tensor<T>&, std::span<const int>);

GBU_INSTANTIATE_BASIC(float)
GBU_INSTANTIATE_BASIC(double)

}  // namespace gbu::nn
