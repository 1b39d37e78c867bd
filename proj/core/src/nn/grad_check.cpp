#include "gbu/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <type_traits>

#include "gbu/nn/attention.hpp"
#include "gbu/nn/ops.hpp"

namespace gbu::nn {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

StencilDerivative stencil_derivative(const std::function<double(double)>& f, double x, double h) {
  const double fm2 = f(x - 2.0 * h), fm1 = f(x - h), f0 = f(x), fp1 = f(x + h), fp2 = f(x + 2.0 * h);
  // divide by the spacing actually represented
  const double central = (fp1 - fm1) / ((x + h) - (x - h));
  const double left = (3.0 * f0 - 4.0 * fm1 + fm2) / (2.0 * h);
  const double right = (-3.0 * f0 + 4.0 * fp1 - fp2) / (2.0 * h);
  const double scale = std::max({1.0, std::abs(fm2), std::abs(f0), std::abs(fp2)});
  const double noise = 1e3 * std::numeric_limits<double>::epsilon() * scale / h;
  if (std::abs(left - right) <= std::max(noise, 1e-7 * std::max(1.0, std::abs(central)))) return {central, false};
  const double left_jump = std::abs((f0 - fm1) - (fm1 - fm2)) / h;
  const double right_jump = std::abs((fp2 - fp1) - (fp1 - f0)) / h;
  return {left_jump <= right_jump ? left : right, true};
}

template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& loss_fn, const std::vector<Tensor<T>>& inputs,
                           double eps, std::size_t max_coords, std::uint64_t subset_seed) {
  require(eps > 0.0, ErrorCode::kContract, "grad_check: eps must be positive");
  std::vector<Tensor<T>> leaves = inputs;
  for (auto& leaf : leaves) leaf.zero_grad();
  const Tensor<T> loss = loss_fn();
  require(loss.numel() == 1, ErrorCode::kContract, "grad_check: loss must be scalar");
  loss.backward();

  std::vector<std::vector<T>> analytic;
  for (const auto& leaf : leaves) {
    if (leaf.has_grad()) analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    else analytic.emplace_back(leaf.numel(), T{0});
  }

  GradCheckResult result;
  std::mt19937_64 rng(subset_seed);
  NoGradGuard no_grad;
  for (std::size_t which = 0; which < leaves.size(); ++which) {
    auto values = leaves[which].mutable_data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords > 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const T original = values[i];
      double numeric = 0.0;
      if constexpr (std::is_same_v<T, double>) {
        const auto d = stencil_derivative(
            [&](double at) {
              values[i] = at;
              return loss_fn().item();
            },
            original, eps);
        numeric = d.value;
        result.kinks += d.kink ? 1 : 0;
      } else {
        const T up = original + static_cast<T>(eps);
        const T down = original - static_cast<T>(eps);
        values[i] = up;
        const double f_up = static_cast<double>(loss_fn().item());
        values[i] = down;
        const double f_down = static_cast<double>(loss_fn().item());
        // divide by the step actually represented in T
        numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
      }
      values[i] = original;
      const double a = static_cast<double>(analytic[which][i]);
      const double err = relative_error(a, numeric);
      ++result.coordinates;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = which;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  return result;
}

template GradCheckResult grad_check<float>(const std::function<Tensor<float>()>&, const std::vector<Tensor<float>>&,
                                           double, std::size_t, std::uint64_t);
template GradCheckResult grad_check<double>(const std::function<Tensor<double>()>&,
                                            const std::vector<Tensor<double>>&, double, std::size_t, std::uint64_t);

namespace {

template <typename T>
struct Instance {
  std::vector<Tensor<T>> inputs;
  std::function<Tensor<T>()> loss;
};

template <typename T>
class Generator {
 public:
  /// With float_grid every draw is rounded to float first, so a double
  /// generator reproduces a float generator's instance exactly.
  explicit Generator(std::uint64_t seed, bool float_grid = false) : rng_(seed), float_grid_(float_grid) {}

  Tensor<T> normal(Shape shape, double stddev = 1.0, bool requires_grad = true) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> data(shape_numel(shape));
    for (T& v : data) v = cast(dist(rng_));
    return Tensor<T>::from_data(std::move(shape), std::move(data), requires_grad);
  }

  /// Values with |v| in [0.2, 1.2], random sign; keeps finite differences off kinks.
  Tensor<T> away_from_zero(Shape shape, bool requires_grad = true) {
    std::uniform_real_distribution<double> mag(0.2, 1.2);
    std::bernoulli_distribution sign(0.5);
    std::vector<T> data(shape_numel(shape));
    for (T& v : data) v = cast(sign(rng_) ? mag(rng_) : -mag(rng_));
    return Tensor<T>::from_data(std::move(shape), std::move(data), requires_grad);
  }

  /// Rows of evenly spaced shuffled values plus small noise. Normalisation
  /// kernels are badly conditioned for near-constant rows, which would make
  /// float finite differences meaningless.
  Tensor<T> spread_rows(Shape shape, bool requires_grad = true) {
    const std::size_t cols = shape.back();
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<T> data(shape_numel(shape));
    std::vector<double> row(cols);
    for (std::size_t r = 0; r < data.size() / cols; ++r) {
      for (std::size_t j = 0; j < cols; ++j)
        row[j] = 0.6 * (static_cast<double>(j) - 0.5 * static_cast<double>(cols - 1)) + noise(rng_);
      std::shuffle(row.begin(), row.end(), rng_);
      for (std::size_t j = 0; j < cols; ++j) data[r * cols + j] = cast(row[j]);
    }
    return Tensor<T>::from_data(std::move(shape), std::move(data), requires_grad);
  }

  std::vector<T> projection(std::size_t n) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<T> w(n);
    for (T& v : w) v = cast(dist(rng_));
    return w;
  }

  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  T cast(double x) const { return float_grid_ ? static_cast<T>(static_cast<float>(x)) : static_cast<T>(x); }

  std::mt19937_64 rng_;
  bool float_grid_ = false;
};

/// Wraps a non-scalar op into a scalar loss via a fixed random projection.
template <typename T>
std::function<Tensor<T>()> projected(Generator<T>& gen, std::size_t out_numel, std::function<Tensor<T>()> op) {
  auto w = std::make_shared<std::vector<T>>(gen.projection(out_numel));
  return [op = std::move(op), w]() { return weighted_sum(op(), std::span<const T>(*w)); };
}

template <typename T>
AttentionBlockParams<T> random_block(Generator<T>& gen, std::size_t hidden, std::size_t width,
                                     std::size_t intermediate) {
  AttentionBlockParams<T> p;
  const double s = 0.5;
  p.query_weight = gen.normal({width, hidden}, s);
  p.query_bias = gen.normal({width}, 0.1);
  p.key_weight = gen.normal({width, hidden}, s);
  p.key_bias = gen.normal({width}, 0.1);
  p.value_weight = gen.normal({width, hidden}, s);
  p.value_bias = gen.normal({width}, 0.1);
  p.output_weight = gen.normal({hidden, width}, s);
  p.output_bias = gen.normal({hidden}, 0.1);
  p.attention_norm_gamma = gen.normal({hidden}, 0.3);
  p.attention_norm_beta = gen.normal({hidden}, 0.1);
  p.intermediate_weight = gen.normal({intermediate, hidden}, s);
  p.intermediate_bias = gen.normal({intermediate}, 0.1);
  p.ffn_output_weight = gen.normal({hidden, intermediate}, s);
  p.ffn_output_bias = gen.normal({hidden}, 0.1);
  p.output_norm_gamma = gen.normal({hidden}, 0.3);
  p.output_norm_beta = gen.normal({hidden}, 0.1);
  for (auto* t : {&p.attention_norm_gamma, &p.output_norm_gamma}) {
    for (T& v : t->mutable_data()) v += T{1};
  }
  return p;
}

template <typename T>
std::vector<Tensor<T>> block_tensors(const AttentionBlockParams<T>& p) {
  return {p.query_weight,        p.query_bias,        p.key_weight,          p.key_bias,
          p.value_weight,        p.value_bias,        p.output_weight,       p.output_bias,
          p.attention_norm_gamma, p.attention_norm_beta, p.intermediate_weight, p.intermediate_bias,
          p.ffn_output_weight,   p.ffn_output_bias,   p.output_norm_gamma,   p.output_norm_beta};
}


template <typename T>
std::vector<std::pair<std::string, std::function<Instance<T>(Generator<T>&)>>> kernel_factories() {
  using G = Generator<T>;
  std::vector<std::pair<std::string, std::function<Instance<T>(G&)>>> out;

  out.emplace_back("elementwise", [](G& g) {
    const std::size_t r = g.uniform(1, 4), c = g.uniform(1, 5);
    auto a = g.normal({r, c}), b = g.normal({r, c});
    auto op = [a, b]() { return scale(mul(add(a, b), sub(a, b)), T{0.7}); };
    return Instance<T>{{a, b}, projected<T>(g, r * c, op)};
  });
  out.emplace_back("mean", [](G& g) {
    auto a = g.normal({g.uniform(1, 4), g.uniform(1, 5)});
    return Instance<T>{{a}, [a]() { return mean(mul(a, a)); }};
  });
  out.emplace_back("linear", [](G& g) {
    const std::size_t rows = g.uniform(1, 5), in = g.uniform(1, 6), outd = g.uniform(1, 6);
    auto x = g.normal({rows, in}), w = g.normal({outd, in}), b = g.normal({outd});
    return Instance<T>{{x, w, b}, projected<T>(g, rows * outd, [x, w, b]() { return linear(x, w, b); })};
  });
  out.emplace_back("matmul", [](G& g) {
    const std::size_t m = g.uniform(1, 5), k = g.uniform(1, 5), n = g.uniform(1, 5);
    auto a = g.normal({m, k}), b = g.normal({k, n}), c = g.normal({k, n});
    auto op = [a, b, c]() { return matmul_nt(matmul(a, b), c); };
    return Instance<T>{{a, b, c}, projected<T>(g, m * k, op)};
  });
  out.emplace_back("shape_ops", [](G& g) {
    const std::size_t r = g.uniform(2, 5), c = g.uniform(2, 6);
    auto a = g.normal({r, c}), b = g.normal({r, c});
    auto op = [a, b, r, c]() {
      auto left = narrow(a, 1, 0, c / 2 + 1);
      auto top = narrow(transpose(b), 0, 1, c - 1);
      auto joined = concat(std::vector<Tensor<T>>{left, transpose(top)}, 1);
      return reshape(concat(std::vector<Tensor<T>>{joined, joined}, 0), {2 * r * (c / 2 + c)});
    };
    const std::size_t n = 2 * r * (c / 2 + c);
    return Instance<T>{{a, b}, projected<T>(g, n, op)};
  });
  out.emplace_back("gelu", [](G& g) {
    auto a = g.normal({g.uniform(1, 3), g.uniform(1, 8)}, 1.5);
    return Instance<T>{{a}, projected<T>(g, a.numel(), [a]() { return gelu(a); })};
  });
  out.emplace_back("softmax_rows", [](G& g) {
    auto a = g.normal({g.uniform(1, 4), g.uniform(1, 6)});
    return Instance<T>{{a}, projected<T>(g, a.numel(), [a]() { return softmax_rows(a); })};
  });
  out.emplace_back("layer_norm", [](G& g) {
    const std::size_t d = g.uniform(2, 7);
    auto x = g.spread_rows({g.uniform(1, 4), d}), gm = g.normal({d}), bt = g.normal({d});
    return Instance<T>{{x, gm, bt}, projected<T>(g, x.numel(), [x, gm, bt]() { return layer_norm(x, gm, bt, 1e-5); })};
  });
  out.emplace_back("rrelu_eval", [](G& g) {
    auto x = g.away_from_zero({g.uniform(1, 3), g.uniform(1, 8)});
    return Instance<T>{{x}, projected<T>(g, x.numel(), [x]() {
                         return rrelu(x, RReluBounds{}, Mode::kEval, nullptr);
                       })};
  });
  out.emplace_back("rrelu_train", [](G& g) {
    auto x = g.away_from_zero({g.uniform(1, 3), g.uniform(1, 8)});
    const std::uint64_t seed = g.engine()();
    return Instance<T>{{x}, projected<T>(g, x.numel(), [x, seed]() {
                         std::mt19937_64 rng(seed);  // same slopes every evaluation
                         return rrelu(x, RReluBounds{}, Mode::kTrain, &rng);
                       })};
  });
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    out.emplace_back(mode == Mode::kTrain ? "batch_norm_train" : "batch_norm_eval", [mode](G& g) {
      const std::size_t c = g.uniform(1, 4), len = g.uniform(2, 8);
      auto x = g.spread_rows({c, len}), gm = g.normal({c}), bt = g.normal({c});
      auto rm = g.normal({c}, 0.5, false);
      auto rv = Tensor<T>::full({c}, T{0.8});
      auto op = [x, gm, bt, rm, rv, mode]() {
        BatchNormState<T> state{rm.clone(), rv.clone()};
        return batch_norm1d(x, gm, bt, state, BatchNormOptions{}, mode);
      };
      return Instance<T>{{x, gm, bt}, projected<T>(g, x.numel(), op)};
    });
  }
  out.emplace_back("conv1d", [](G& g) {
    const std::size_t c_in = g.uniform(1, 3), c_out = g.uniform(1, 3), k = g.uniform(1, 7);
    const std::size_t stride = g.uniform(1, 3), pad = g.uniform(0, 3);
    const std::size_t len = std::max<std::size_t>(k, g.uniform(4, 12));
    auto x = g.normal({c_in, len}), w = g.normal({c_out, c_in, k}), b = g.normal({c_out});
    const std::size_t out_len = (len + 2 * pad - k) / stride + 1;
    return Instance<T>{{x, w, b}, projected<T>(g, c_out * out_len, [x, w, b, stride, pad]() {
                         return conv1d(x, w, b, stride, pad);
                       })};
  });
  out.emplace_back("conv_transpose1d", [](G& g) {
    const std::size_t c_in = g.uniform(1, 3), c_out = g.uniform(1, 3), k = g.uniform(1, 7);
    const std::size_t stride = g.uniform(1, 4), len = g.uniform(1, 6);
    const std::size_t pad = g.uniform(0, std::min<std::size_t>(3, ((len - 1) * stride + k - 1) / 2));
    auto x = g.normal({c_in, len}), w = g.normal({c_in, c_out, k}), b = g.normal({c_out});
    const std::size_t out_len = (len - 1) * stride + k - 2 * pad;
    return Instance<T>{{x, w, b}, projected<T>(g, c_out * out_len, [x, w, b, stride, pad]() {
                         return conv_transpose1d(x, w, b, stride, pad);
                       })};
  });
  out.emplace_back("attention_block", [](G& g) {
    const std::size_t heads = g.uniform(1, 2), head_dim = g.uniform(1, 3);
    const std::size_t hidden = heads * head_dim + g.uniform(0, 1), len = g.uniform(1, 4);
    auto params = random_block(g, hidden, heads * head_dim, g.uniform(1, 5));
    auto x = g.normal({len, hidden});
    auto inputs = block_tensors(params);
    inputs.insert(inputs.begin(), x);
    return Instance<T>{inputs, projected<T>(g, x.numel(), [x, params, heads]() {
                         return multi_head_self_attention(x, params, heads);
                       })};
  });
  out.emplace_back("bert_encode", [](G& g) {
    const std::size_t hidden = 4, len = g.uniform(1, 3);
    BertParams<T> bert;
    bert.position_embeddings = g.normal({5, hidden}, 0.5);
    bert.embedding_norm_gamma = g.normal({hidden}, 0.3);
    for (T& v : bert.embedding_norm_gamma.mutable_data()) v += T{1};
    bert.embedding_norm_beta = g.normal({hidden}, 0.1);
    bert.blocks.push_back(random_block(g, hidden, hidden, 6));
    auto x = g.normal({len, hidden});
    std::vector<Tensor<T>> inputs{x, bert.position_embeddings, bert.embedding_norm_gamma, bert.embedding_norm_beta};
    for (const auto& t : block_tensors(bert.blocks.front())) inputs.push_back(t);
    return Instance<T>{inputs, projected<T>(g, x.numel(), [x, bert]() { return bert_encode(x, bert, 2); })};
  });
  out.emplace_back("select_rows", [](G& g) {
    const std::size_t n = g.uniform(1, 4), t = g.uniform(1, 8);
    auto x = g.normal({n, t});
    std::vector<int> idx(t);
    for (int& i : idx) i = static_cast<int>(g.uniform(0, n - 1));
    return Instance<T>{{x}, projected<T>(g, t, [x, idx]() { return select_rows(x, std::span<const int>(idx)); })};
  });
  out.emplace_back("masked_l1", [](G& g) {
    const std::size_t n = g.uniform(2, 10);
    auto p = g.normal({n});
    auto offset = g.away_from_zero({n}, false);
    std::vector<T> target(n);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      target[i] = p.values()[i] + offset.values()[i];
      mask[i] = static_cast<std::uint8_t>(i == 0 || g.uniform(0, 3) > 0);
    }
    return Instance<T>{{p}, [p, target, mask]() {
                         return masked_l1(p, std::span<const T>(target), std::span<const std::uint8_t>(mask));
                       }};
  });
  out.emplace_back("masked_pearson", [](G& g) {
    const std::size_t n = g.uniform(3, 10);
    auto p = g.normal({n});
    auto t = g.normal({n}, 1.0, false);
    std::vector<T> target(t.values());
    std::vector<std::uint8_t> mask(n, 1);
    if (n > 4) mask[g.uniform(0, n - 1)] = 0;
    return Instance<T>{{p}, [p, target, mask]() {
                         return masked_pearson(p, std::span<const T>(target), std::span<const std::uint8_t>(mask),
                                               1e-8);
                       }};
  });
  out.emplace_back("cross_entropy", [](G& g) {
    const std::size_t classes = g.uniform(2, 4), steps = g.uniform(1, 6);
    auto z = g.normal({classes, steps}, 2.0);
    std::vector<std::uint8_t> labels(steps);
    for (auto& l : labels) l = static_cast<std::uint8_t>(g.uniform(0, classes));  // == classes -> ignored below
    for (auto& l : labels)
      if (l == classes) l = 255;
    return Instance<T>{{z}, [z, labels]() {
                         return cross_entropy_sum(z, std::span<const std::uint8_t>(labels), std::uint8_t{255});
                       }};
  });
  return out;
}

void run_f64(const KernelSuiteOptions& options, std::vector<GradCheckEntry>& entries) {
  std::uint64_t salt = 0;
  for (const auto& [name, factory] : kernel_factories<double>()) {
    GradCheckEntry entry{name, "f64", options.instances, 0.0, options.tolerance_f64};
    Generator<double> gen(options.seed * 1000003ULL + (++salt) * 7919ULL + sizeof(double));
    for (std::size_t i = 0; i < options.instances; ++i) {
      Instance<double> inst = factory(gen);
      const auto r = grad_check<double>(inst.loss, inst.inputs, 1e-5);
      entry.max_rel_error = std::max(entry.max_rel_error, r.max_rel_error);
      entry.kinks += r.kinks;
    }
    entries.push_back(entry);
  }
}

/// Float reverse-mode gradients against 64-bit central differences of the
/// same instance; float differences through stacked normalisations carry
/// more rounding error than the tolerance allows.
double check_f32_instance(Instance<float>& single, Instance<double>& reference, double eps, std::size_t& kinks) {
  require(single.inputs.size() == reference.inputs.size(), ErrorCode::kContract, "f32 check: instance mismatch");
  for (std::size_t k = 0; k < single.inputs.size(); ++k) {
    const auto from = single.inputs[k].data();
    auto to = reference.inputs[k].mutable_data();
    std::copy(from.begin(), from.end(), to.begin());
    single.inputs[k].zero_grad();
  }
  single.loss().backward();
  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < reference.inputs.size(); ++k) {
    auto values = reference.inputs[k].mutable_data();
    const bool has_grad = single.inputs[k].has_grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      const auto d = stencil_derivative(
          [&](double at) {
            values[i] = at;
            return reference.loss().item();
          },
          original, eps);
      values[i] = original;
      kinks += d.kink ? 1 : 0;
      const double analytic = has_grad ? static_cast<double>(single.inputs[k].grad()[i]) : 0.0;
      worst = std::max(worst, relative_error(analytic, d.value));
    }
    single.inputs[k].zero_grad();
  }
  return worst;
}

void run_f32(const KernelSuiteOptions& options, std::vector<GradCheckEntry>& entries) {
  const auto singles = kernel_factories<float>();
  const auto references = kernel_factories<double>();
  for (std::size_t f = 0; f < singles.size(); ++f) {
    GradCheckEntry entry{singles[f].first, "f32", options.instances, 0.0, options.tolerance_f32};
    const std::uint64_t seed = options.seed * 1000003ULL + (f + 1) * 7919ULL + sizeof(float);
    Generator<float> gen(seed);
    Generator<double> ref_gen(seed, true);
    for (std::size_t i = 0; i < options.instances; ++i) {
      Instance<float> single = singles[f].second(gen);
      Instance<double> reference = references[f].second(ref_gen);
      entry.max_rel_error = std::max(entry.max_rel_error, check_f32_instance(single, reference, 1e-6, entry.kinks));
    }
    entries.push_back(entry);
  }
}

}  // namespace

std::vector<GradCheckEntry> kernel_gradcheck_suite(const KernelSuiteOptions& options) {
  std::vector<GradCheckEntry> entries;
  run_f64(options, entries);
  run_f32(options, entries);
  return entries;
}

}  // namespace gbu::nn
