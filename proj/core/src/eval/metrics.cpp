#include "gbu/eval/metrics.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "gbu/common/error.hpp"

namespace gbu::eval {

std::vector<std::pair<std::size_t, std::size_t>> segment(std::size_t length, std::size_t seg_len) {
  require(seg_len > 0, ErrorCode::kContract, "segment length must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start + seg_len <= length; start += seg_len) out.emplace_back(start, start + seg_len);
  if (out.empty()) spdlog::warn("series of {} s is shorter than one {} s segment; nothing to score", length, seg_len);
  return out;
}

Metrics metrics(std::span<const double> y_hat, std::span<const double> y) {
  require(y_hat.size() == y.size(), ErrorCode::kDimension, "metrics: series lengths differ");
  require(y.size() >= 2, ErrorCode::kLength, "metrics need at least two samples");
  const double n = static_cast<double>(y.size());
  double mp = 0.0, mt = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mp += y_hat[i];
    mt += y[i];
    const double d = y_hat[i] - y[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  mp /= n;
  mt /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y_hat[i] - mp, b = y[i] - mt;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  Metrics m;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.corr_defined = sxx / n >= kFlatVariance && syy / n >= kFlatVariance;
  m.corr = m.corr_defined ? sxy / std::sqrt(sxx * syy) : 0.0;
  return m;
}

double quantile(std::span<const double> sorted, double q) {
  require(!sorted.empty(), ErrorCode::kEmptyInput, "quantile of an empty series");
  require(q >= 0.0 && q <= 1.0, ErrorCode::kContract, "quantile level outside [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace gbu::eval
