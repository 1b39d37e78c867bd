#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace gbu::eval {

inline constexpr std::size_t kSegmentSeconds = 240;
/// Below this variance (sum of squares / n) a series counts as flat.
inline constexpr double kFlatVariance = 1e-12;

/// [begin, end) index ranges of consecutive non-overlapping windows; the
/// incomplete tail is dropped. Logs a warning when the series is shorter than one window.
std::vector<std::pair<std::size_t, std::size_t>> segment(std::size_t length, std::size_t seg_len = kSegmentSeconds);

struct Metrics {
  double corr = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  bool corr_defined = true;  // false when either side is flat; corr is then 0
};

/// Pearson correlation, mean absolute error and root mean squared error. kLength below 2 samples.
Metrics metrics(std::span<const double> y_hat, std::span<const double> y);

/// Linear interpolation between order statistics at position q * (n - 1).
double quantile(std::span<const double> sorted, double q);

}  // namespace gbu::eval
