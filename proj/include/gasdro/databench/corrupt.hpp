#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gasdro/databench/dataset.hpp"
#include "gasdro/numcore/rng.hpp"

namespace gasdro::data {

enum class CorruptionKind { gaussian, perlin, cutout };

inline const char* to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gaussian: return "gaussian";
    case CorruptionKind::perlin: return "perlin";
    case CorruptionKind::cutout: return "cutout";
  }
  return "?";
}

inline CorruptionKind parse_corruption(const std::string& s) {
  if (s == "gaussian") return CorruptionKind::gaussian;
  if (s == "perlin") return CorruptionKind::perlin;
  if (s == "cutout") return CorruptionKind::cutout;
  throw ConfigError("unknown corruption kind '" + s + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian;
  double sigma = 0.1;         // gaussian
  double amplitude = 1.0;     // perlin
  std::size_t octaves = 8;
  double persistence = 0.5;
  double base_frequency = 4.0;  // lattice cells per window at octave 0
  double ratio = 0.3;         // cutout
  double fill = 1.0;

  // The kind's own intensity knob.
  double level() const {
    switch (kind) {
      case CorruptionKind::gaussian: return sigma;
      case CorruptionKind::perlin: return amplitude;
      case CorruptionKind::cutout: return ratio;
    }
    return 0.0;
  }

  static CorruptionSpec at_level(CorruptionKind kind, double level) {
    CorruptionSpec s;
    s.kind = kind;
    switch (kind) {
      case CorruptionKind::gaussian: s.sigma = level; break;
      case CorruptionKind::perlin: s.amplitude = level; break;
      case CorruptionKind::cutout: s.ratio = level; break;
    }
    s.validate();
    return s;
  }

  void validate() const {
    if (!(sigma >= 0.0)) throw ConfigError("corruption: sigma must be >= 0");
    if (!(amplitude >= 0.0)) throw ConfigError("corruption: amplitude must be >= 0");
    if (octaves < 1) throw ConfigError("corruption: octaves must be >= 1");
    if (!(persistence > 0.0)) throw ConfigError("corruption: persistence must be positive");
    if (!(base_frequency > 0.0)) throw ConfigError("corruption: base frequency must be positive");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("corruption: ratio must lie in [0,1]");
  }
};

inline double perlin_fade(double u) { return u * u * u * (u * (u * 6.0 - 15.0) + 10.0); }

/// 1-D fractal gradient noise at n evenly spaced positions s = j / n. Octave o
/// has lattice spacing 1 / (2^o f0) with gradients uniform in [-1, 1] and
/// weight persistence^o. The sum is divided by its max abs, so the result
/// lies in [-1, 1] (all zeros stay zeros).
inline std::vector<double> perlin_noise(std::size_t n, const CorruptionSpec& spec, nc::Rng& rng) {
  std::vector<double> out(n, 0.0);
  double weight = 1.0;
  for (std::size_t o = 0; o < spec.octaves; ++o) {
    const double freq = spec.base_frequency * std::ldexp(1.0, static_cast<int>(o));
    const std::size_t nodes = static_cast<std::size_t>(std::ceil(freq)) + 2;
    std::vector<double> grad(nodes);
    for (auto& g : grad) g = rng.uniform(-1.0, 1.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double x = freq * static_cast<double>(j) / static_cast<double>(n);
      const auto i = static_cast<std::size_t>(std::floor(x));
      const double fx = x - static_cast<double>(i);
      const double a = grad[i] * fx;
      const double b = grad[i + 1] * (fx - 1.0);
      out[j] += weight * (a + perlin_fade(fx) * (b - a));
    }
    weight *= spec.persistence;
  }
  double mx = 0.0;
  for (double v : out) mx = std::max(mx, std::abs(v));
  if (mx > 0.0)
    for (auto& v : out) v /= mx;
  return out;
}

/// Applies one corruption to every window (input and target positions alike).
/// Draw order: windows in order; gaussian takes L normals per window, perlin its
/// lattice gradients octave by octave, cutout one start index.
inline SequenceDataset corrupt(SequenceDataset ds, const CorruptionSpec& spec, nc::Rng& rng) {
  spec.validate();
  const std::size_t L = ds.window_len();
  auto& w = ds.windows;
  if (spec.level() == 0.0) return ds;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    switch (spec.kind) {
      case CorruptionKind::gaussian:
        for (std::size_t j = 0; j < L; ++j) w(i, j) += spec.sigma * rng.normal();
        break;
      case CorruptionKind::perlin: {
        auto p = perlin_noise(L, spec, rng);
        for (std::size_t j = 0; j < L; ++j) w(i, j) += spec.amplitude * p[j];
        break;
      }
      case CorruptionKind::cutout: {
        const auto len = static_cast<std::size_t>(std::lround(spec.ratio * static_cast<double>(L)));
        if (len == 0) break;
        const std::size_t start = rng.below(L - len + 1);
        for (std::size_t j = start; j < start + len; ++j) w(i, j) = spec.fill;
        break;
      }
    }
  }
  return ds;
}

}  // namespace gasdro::data
