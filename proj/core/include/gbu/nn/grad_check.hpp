#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gbu/nn/tensor.hpp"

namespace gbu::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;  // number of coordinates compared
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t kinks = 0;  // coordinates resolved by a one-sided stencil
};

struct StencilDerivative {
  double value = 0.0;
  bool kink = false;
};

/// Derivative of `f` at x from samples at x-2h..x+2h. When the second-order
/// one-sided estimates disagree beyond rounding noise, a kink lies inside
/// the stencil and the estimate from the side whose consecutive slopes agree
/// is returned; otherwise the central difference.
StencilDerivative stencil_derivative(const std::function<double(double)>& f, double x, double h);

/// |a - n| / max(1, |a|, |n|)
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of the scalar `loss_fn()` with respect to
/// each tensor in `inputs` against central differences with step `eps`.
/// `loss_fn` must be deterministic. `max_coords` > 0 checks a seeded random
/// subset of that many coordinates per input instead of all of them.
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& loss_fn, const std::vector<Tensor<T>>& inputs,
                           double eps, std::size_t max_coords = 0, std::uint64_t subset_seed = 0);

/// Outcome of one named check in a suite.
struct GradCheckEntry {
  std::string name;
  std::string precision;  // "f32" or "f64"
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t kinks = 0;
  [[nodiscard]] bool passed() const { return max_rel_error < tolerance; }
};

struct KernelSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 20;
  double tolerance_f32 = 1e-3;
  double tolerance_f64 = 1e-5;
};

/// Every differentiable kernel on `instances` random small problems in both
/// precisions.
std::vector<GradCheckEntry> kernel_gradcheck_suite(const KernelSuiteOptions& options);

extern template GradCheckResult grad_check<float>(const std::function<Tensor<float>()>&,
                                                  const std::vector<Tensor<float>>&, double, std::size_t,
                                                  std::uint64_t);
extern template GradCheckResult grad_check<double>(const std::function<Tensor<double>()>&,
                                                   const std::vector<Tensor<double>>&, double, std::size_t,
                                                   std::uint64_t);

}  // namespace gbu::nn
