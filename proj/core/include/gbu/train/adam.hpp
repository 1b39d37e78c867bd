#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gbu/model/param_set.hpp"

namespace gbu::train {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::size_t step = 0;
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
};

/// Bias-corrected update of one tensor at step t >= 1; moments are updated in place.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::size_t t,
                 const AdamOptions& options);

/// One step over every trainable entry (missing gradients count as zero).
/// A non-finite gradient throws kNonFinite naming the parameter and step,
/// before anything is modified.
template <typename T>
void adam_step(const model::ParamSet<T>& params, AdamState<T>& state);

extern template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                        std::span<float>, std::size_t, const AdamOptions&);
extern template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                         std::span<double>, std::size_t, const AdamOptions&);
extern template void adam_step<float>(const model::ParamSet<float>&, AdamState<float>&);
extern template void adam_step<double>(const model::ParamSet<double>&, AdamState<double>&);

}  // namespace gbu::train
