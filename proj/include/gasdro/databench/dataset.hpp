#pragma once

#include <cmath>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/tensor.hpp"

namespace gasdro::data {

using nc::Tensor;

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Windows of length L = L_in + L_out, one per row.
struct SequenceDataset {
  Tensor windows;
  std::size_t input_len = 0;
  std::size_t output_len = 0;
  NormStats norm{};

  std::size_t window_len() const { return input_len + output_len; }
  std::size_t size() const { return windows.empty() ? 0 : windows.rows(); }
};

inline SequenceDataset window(const std::vector<double>& series, std::size_t input_len,
                              std::size_t output_len, std::size_t stride) {
  const std::size_t L = input_len + output_len;
  if (input_len == 0 || output_len == 0) throw ConfigError("window: split sizes must be positive");
  if (stride == 0) throw ConfigError("window: stride must be positive");
  if (series.size() < L)
    throw ConfigError("window: series of length " + std::to_string(series.size()) +
                      " is shorter than the window " + std::to_string(L));
  const std::size_t count = (series.size() - L) / stride + 1;
  SequenceDataset ds;
  ds.input_len = input_len;
  ds.output_len = output_len;
  ds.windows = Tensor(count, L);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < L; ++j) ds.windows(i, j) = series[i * stride + j];
  return ds;
}

// Mean and population std over every value of the windows.
inline NormStats fit_normalization(const SequenceDataset& ds) {
  const auto& v = ds.windows.values();
  if (v.empty()) throw ConfigError("fit_normalization: empty dataset");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  const double sd = std::sqrt(s2 / static_cast<double>(v.size()));
  if (!(sd > 0.0)) throw NumericError("fit_normalization: zero variance");
  return {m, sd};
}

inline SequenceDataset normalize(SequenceDataset ds, const NormStats& s) {
  if (!(s.std > 0.0)) throw ConfigError("normalize: std must be positive");
  for (auto& x : ds.windows.values()) x = (x - s.mean) / s.std;
  ds.norm = s;
  return ds;
}

inline SequenceDataset denormalize(SequenceDataset ds, const NormStats& s) {
  for (auto& x : ds.windows.values()) x = x * s.std + s.mean;
  ds.norm = NormStats{};
  return ds;
}

}  // namespace gasdro::data
