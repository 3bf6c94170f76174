#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gasdro/baselines/erm.hpp"

namespace gasdro::base {

struct KlDroConfig {
  double eps_kl = 4.0;
  double alpha_lo = 1e-6;
  double alpha_hi = 1e6;
  double search_tol = 1e-10;  // on log alpha
  std::size_t widen_attempts = 4;

  void validate() const {
    if (!(eps_kl > 0.0)) throw ConfigError("KlDroConfig: eps_kl must be positive");
    if (!(alpha_lo > 0.0 && alpha_lo < alpha_hi))
      throw ConfigError("KlDroConfig: need 0 < alpha_lo < alpha_hi");
    if (!(search_tol > 0.0)) throw ConfigError("KlDroConfig: search_tol must be positive");
  }
};

// alpha * log mean exp(f / alpha), max-shifted.
inline double scaled_log_mean_exp(const std::vector<double>& f, double alpha) {
  const double mx = *std::max_element(f.begin(), f.end());
  double z = 0.0;
  for (double v : f) z += std::exp((v - mx) / alpha);
  return mx + alpha * std::log(z / static_cast<double>(f.size()));
}

inline double kl_dual_objective(const std::vector<double>& f, double eps, double alpha) {
  return alpha * eps + scaled_log_mean_exp(f, alpha);
}

struct KlDualSolution {
  double alpha = 0.0;  // 0 marks the alpha -> 0 limit (value = max f)
  double value = 0.0;
};

/// min over alpha > 0 of alpha eps + alpha log mean exp(f / alpha), by
/// golden-section search on log alpha. The objective is convex in alpha.
/// A minimizer at the upper end widens the interval (x100) and retries; at the
/// lower end the interval is widened too, and if it stays there the alpha -> 0
/// limit, max f, is used.
inline KlDualSolution solve_kl_dual(const std::vector<double>& f, const KlDroConfig& cfg) {
  cfg.validate();
  if (f.empty()) throw ConfigError("kl_dro: empty batch");
  const double fmax = *std::max_element(f.begin(), f.end());
  const double fmin = *std::min_element(f.begin(), f.end());
  if (fmax - fmin == 0.0) return {0.0, fmax};
  double lo = std::log(cfg.alpha_lo), hi = std::log(cfg.alpha_hi);
  for (std::size_t attempt = 0;; ++attempt) {
    auto g = [&](double la) { return kl_dual_objective(f, cfg.eps_kl, std::exp(la)); };
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double gc = g(c), gd = g(d);
    while (b - a > cfg.search_tol) {
      if (gc <= gd) {
        b = d;
        d = c;
        gd = gc;
        c = b - phi * (b - a);
        gc = g(c);
      } else {
        a = c;
        c = d;
        gc = gd;
        d = a + phi * (b - a);
        gd = g(d);
      }
    }
    const double la = 0.5 * (a + b);
    const double edge = 1e-6 * (hi - lo);
    const bool at_hi = la > hi - edge, at_lo = la < lo + edge;
    if (!at_hi && !at_lo) return {std::exp(la), g(la)};
    if (attempt >= cfg.widen_attempts) {
      if (at_lo) return {0.0, std::min(fmax, g(la))};
      throw NumericError("kl_dro: search interval does not bracket the minimizer");
    }
    if (at_hi) hi += std::log(100.0);
    if (at_lo) lo -= std::log(100.0);
  }
}

/// Robust loss for one batch. The value is the dual optimum; the gradient in w
/// is the softmax-weighted per-sample gradient at the optimal alpha (alpha held
/// fixed). In the alpha -> 0 limit, the weight sits on the largest losses.
inline Var kl_dro_loss(Tape& tape, Predictor& p, const Tensor& batch, const KlDroConfig& cfg) {
  Var rows = dro::forecast_loss_rows(tape, p, tape.constant(batch));
  const auto& fv = rows.value().values();
  KlDualSolution sol = solve_kl_dual(fv, cfg);
  if (sol.alpha > 0.0)
    return nc::add_scalar(nc::scaled_log_mean_exp(rows, sol.alpha), sol.alpha * cfg.eps_kl);
  const double fmax = *std::max_element(fv.begin(), fv.end());
  std::vector<double> pick(fv.size(), 0.0);
  double count = 0.0;
  for (std::size_t i = 0; i < fv.size(); ++i)
    if (fv[i] == fmax) count += 1.0;
  for (std::size_t i = 0; i < fv.size(); ++i)
    if (fv[i] == fmax) pick[i] = 1.0 / count;
  return nc::sum(nc::mul(rows, tape.constant(Tensor::column(std::move(pick)))));
}

// Same dual value for plain per-sample losses (uniform nominal weights).
inline double kl_dro_value(const std::vector<double>& f, const KlDroConfig& cfg) {
  return solve_kl_dual(f, cfg).value;
}

/// max sum q_i f_i over the simplex subject to KL(q || p) <= eps, by exponential
/// tilting q_i ~ p_i exp(beta f_i) with bisection on beta = 1 / alpha until the
/// constraint is active. If the limit beta -> infinity stays feasible, the
/// answer is the maximum f on the support of p.
inline double kl_dro_bruteforce(const std::vector<double>& f, const std::vector<double>& p,
                                double eps) {
  if (f.empty() || f.size() != p.size()) throw ConfigError("kl_dro_bruteforce: size mismatch");
  if (!(eps >= 0.0)) throw ConfigError("kl_dro_bruteforce: eps must be non-negative");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ConfigError("kl_dro_bruteforce: negative probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("kl_dro_bruteforce: p must sum to 1");

  if (eps == 0.0) {
    double ev = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) ev += p[i] * f[i];
    return ev;
  }

  double fmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.size(); ++i)
    if (p[i] > 0.0) fmax = std::max(fmax, f[i]);
  double top_mass = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (p[i] > 0.0 && f[i] == fmax) top_mass += p[i];
  if (-std::log(top_mass) <= eps) return fmax;

  // tilted distribution at beta: returns (KL, expectation)
  auto tilt = [&](double beta) {
    std::vector<double> q(f.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
      if (p[i] > 0.0) {
        q[i] = p[i] * std::exp(beta * (f[i] - fmax));
        z += q[i];
      }
    double kl = 0.0, ev = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (q[i] <= 0.0) continue;
      q[i] /= z;
      kl += q[i] * std::log(q[i] / p[i]);
      ev += q[i] * f[i];
    }
    return std::pair{kl, ev};
  };
  double lo = 0.0, hi = 1.0;
  while (tilt(hi).first < eps) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (tilt(mid).first < eps)
      lo = mid;
    else
      hi = mid;
  }
  return tilt(0.5 * (lo + hi)).second;
}

inline std::vector<double> train_kldro(Predictor& p, const Tensor& data, const KlDroConfig& kl,
                                       const TrainConfig& cfg, nc::Rng& rng) {
  kl.validate();
  return train_loop(p, data, cfg, rng, [&kl](Tape& tape, Predictor& pr, const Tensor& b) {
    return kl_dro_loss(tape, pr, b, kl);
  });
}

}  // namespace gasdro::base
