#pragma once

#include <cstdint>
#include <vector>

#include "gbu/nn/grad_check.hpp"

namespace gbu::model {

struct ModelCheckOptions {
  std::uint64_t seed = 0;
  /// Coordinates sampled per parameter tensor (0 = all).
  std::size_t coords_per_tensor = 4;
  double tolerance_f32 = 1e-3;
  double tolerance_f64 = 1e-5;
};

/// Finite-difference check of the full loss of every tiny variant (eval-mode
/// activations) with respect to all trainable parameters, in both precisions.
/// Gated models are checked with a fixed gate series so the check stays smooth.
std::vector<nn::GradCheckEntry> model_gradcheck_suite(const ModelCheckOptions& options);

}  // namespace gbu::model
