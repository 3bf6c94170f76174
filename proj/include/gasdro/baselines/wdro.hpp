#pragma once

#include <cmath>
#include <vector>

#include "gasdro/baselines/erm.hpp"

namespace gasdro::base {

struct WDroConfig {
  double eps_w = 0.3;
  std::size_t pgd_steps = 5;
  double pgd_lr = 0.1;  // step length per normalized ascent step

  void validate() const {
    if (!(eps_w >= 0.0)) throw ConfigError("WDroConfig: eps_w must be non-negative");
    if (pgd_steps < 1) throw ConfigError("WDroConfig: pgd_steps must be at least 1");
    if (!(pgd_lr > 0.0)) throw ConfigError("WDroConfig: pgd_lr must be positive");
  }
};

// In-place projection of each row onto the l2 ball of radius r.
inline void project_rows(Tensor& delta, double r) {
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < delta.cols(); ++j) n2 += delta(i, j) * delta(i, j);
    const double n = std::sqrt(n2);
    if (n > r) {
      const double s = r > 0.0 ? r / n : 0.0;
      for (std::size_t j = 0; j < delta.cols(); ++j) delta(i, j) *= s;
    }
  }
}

/// Per-sample l2 PGD on the forecast loss: delta <- P(delta + lr g / |g|),
/// starting from zero. Each window gets its own ball of radius eps_w.
inline Tensor wdro_adversary(Predictor& p, const Tensor& batch, const WDroConfig& cfg) {
  cfg.validate();
  if (cfg.eps_w == 0.0) return batch;
  Tensor delta(batch.rows(), batch.cols(), 0.0);
  Tensor x = batch;
  for (std::size_t s = 0; s < cfg.pgd_steps; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = batch[i] + delta[i];
    Tape tape;
    Var xv = tape.leaf(x);
    // The summed per-row losses give each row its own gradient.
    tape.backward(nc::sum(dro::forecast_loss_rows(tape, p, xv)));
    const auto& g = tape.grad(xv);
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      double n2 = 0.0;
      for (std::size_t j = 0; j < delta.cols(); ++j) n2 += g[i * delta.cols() + j] * g[i * delta.cols() + j];
      const double n = std::sqrt(n2);
      if (n == 0.0) continue;
      for (std::size_t j = 0; j < delta.cols(); ++j)
        delta(i, j) += cfg.pgd_lr * g[i * delta.cols() + j] / n;
    }
    project_rows(delta, cfg.eps_w);
    p.w.zero_grad();
  }
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = batch[i] + delta[i];
  return x;
}

/// Alternates: adversarial batch for the current w, then one Adam step on the
/// forecast loss at the perturbed batch.
inline std::vector<double> train_wdro(Predictor& p, const Tensor& data, const WDroConfig& wd,
                                      const TrainConfig& cfg, nc::Rng& rng) {
  wd.validate();
  return train_loop(p, data, cfg, rng, [&wd](Tape& tape, Predictor& pr, const Tensor& b) {
    Tensor adv = wdro_adversary(pr, b, wd);
    return dro::forecast_loss(tape, pr, tape.constant(adv));
  });
}

}  // namespace gasdro::base
