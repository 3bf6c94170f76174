#pragma once

#include <cmath>
#include <vector>

#include "gasdro/error.hpp"

namespace gasdro::gen {

/// Discrete diffusion coefficients. All per-step arrays are indexed by the
/// step t = 1..T; index 0 holds the t = 0 convention (alpha_bar[0] = 1).
struct NoiseSchedule {
  std::size_t T = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> alpha;      // alpha_t = 1 - beta_t
  std::vector<double> alpha_bar;  // prod_{tau <= t} alpha_tau
  std::vector<double> sigma2;     // posterior variance; sigma2[1] == 0
  std::vector<double> iota;       // denoising-loss weights
  double sigma_samp = 0.3;        // sampling std on fine-tuned steps

  double beta(std::size_t t) const { return 1.0 - alpha.at(t); }

  bool same_coefficients(const NoiseSchedule& o) const {
    return T == o.T && alpha == o.alpha && sigma_samp == o.sigma_samp;
  }
};

/// Fills the derived fields from alpha_1..alpha_T.
///
/// iota_t = (1 / (2 sigma_t^2)) (1 - alpha_t)^2 / ((1 - alpha_bar_t) alpha_t) for t >= 2.
/// sigma_1^2 is zero, so the t = 1 weight substitutes the decoder variance
/// beta_1 for it, which reduces to 1 / (2 alpha_1).
inline NoiseSchedule schedule_from_alphas(std::vector<double> alphas, double sigma_samp = 0.3) {
  if (alphas.empty()) throw ConfigError("schedule: need at least one step");
  NoiseSchedule s;
  s.T = alphas.size();
  s.sigma_samp = sigma_samp;
  s.alpha.assign(s.T + 1, 1.0);
  s.alpha_bar.assign(s.T + 1, 1.0);
  s.sigma2.assign(s.T + 1, 0.0);
  s.iota.assign(s.T + 1, 0.0);
  for (std::size_t t = 1; t <= s.T; ++t) {
    const double a = alphas[t - 1];
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("schedule: alpha_t must lie in (0,1)");
    s.alpha[t] = a;
    s.alpha_bar[t] = s.alpha_bar[t - 1] * a;
    s.sigma2[t] = (1.0 - a) * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]);
    const double ratio = (1.0 - a) * (1.0 - a) / ((1.0 - s.alpha_bar[t]) * a);
    s.iota[t] = t == 1 ? 1.0 / (2.0 * a) : ratio / (2.0 * s.sigma2[t]);
  }
  s.beta_min = 1.0 - s.alpha[1];
  s.beta_max = 1.0 - s.alpha[s.T];
  return s;
}

/// Linear beta schedule from beta_min (t = 1) to beta_max (t = T).
inline NoiseSchedule build_schedule(std::size_t T, double beta_min, double beta_max,
                                    double sigma_samp = 0.3) {
  if (T < 2) throw ConfigError("build_schedule: T must be at least 2");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw ConfigError("build_schedule: need 0 < beta_min <= beta_max < 1");
  if (!(sigma_samp > 0.0)) throw ConfigError("build_schedule: sigma_samp must be positive");
  std::vector<double> alphas(T);
  for (std::size_t t = 1; t <= T; ++t) {
    const double frac = static_cast<double>(t - 1) / static_cast<double>(T - 1);
    alphas[t - 1] = 1.0 - (beta_min + frac * (beta_max - beta_min));
  }
  auto s = schedule_from_alphas(std::move(alphas), sigma_samp);
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  return s;
}

}  // namespace gasdro::gen
