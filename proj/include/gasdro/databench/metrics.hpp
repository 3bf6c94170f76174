#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/tensor.hpp"

namespace gasdro::data {

namespace detail {
// Linear-interpolated quantiles of sorted `s` at levels k / (m - 1).
inline std::vector<double> resample_sorted(const std::vector<double>& s, std::size_t m) {
  if (m == s.size()) return s;
  std::vector<double> out(m);
  if (m == 1) {
    out[0] = s[(s.size() - 1) / 2];
    if (s.size() % 2 == 0) out[0] = 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
    return out;
  }
  const double scale = static_cast<double>(s.size() - 1) / static_cast<double>(m - 1);
  for (std::size_t k = 0; k < m; ++k) {
    const double pos = scale * static_cast<double>(k);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out[k] = s[lo] + frac * (s[hi] - s[lo]);
  }
  return out;
}
}  // namespace detail

/// 1-D W1 between two scalar samples: mean |a_(k) - b_(k)| over sorted values.
/// The larger sample is first reduced to m = min size points by linear
/// quantile interpolation.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("wasserstein1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t m = std::min(a.size(), b.size());
  a = detail::resample_sorted(a, m);
  b = detail::resample_sorted(b, m);
  double s = 0.0;
  for (std::size_t k = 0; k < m; ++k) s += std::abs(a[k] - b[k]);
  return s / static_cast<double>(m);
}

// Flattened values of two window sets.
inline double wasserstein1(const nc::Tensor& a, const nc::Tensor& b) {
  return wasserstein1(a.values(), b.values());
}

inline double mse(const nc::Tensor& pred, const nc::Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mse: " + pred.shape_string() + " vs " + target.shape_string());
  if (pred.empty()) throw ShapeError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    s += e * e;
  }
  return s / static_cast<double>(pred.size());
}

}  // namespace gasdro::data
