#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "gasdro/genmodels/diffusion.hpp"
#include "gasdro/genmodels/vae.hpp"
#include "gasdro/numcore/adam.hpp"

namespace gasdro::gen {

struct GenTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 64;
  double lr = 1e-3;
  double final_lr_fraction = 1.0;  // linear decay of the step size to lr * fraction
};

namespace detail {
// Uniform minibatch with replacement; empty data is rejected by the callers.
inline double decayed_lr(const GenTrainConfig& cfg, std::size_t step) {
  if (cfg.steps <= 1) return cfg.lr;
  const double u = static_cast<double>(step) / static_cast<double>(cfg.steps - 1);
  return cfg.lr * (1.0 - u * (1.0 - cfg.final_lr_fraction));
}

inline Tensor sample_rows(const Tensor& data, std::size_t batch, nc::Rng& rng) {
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = rng.below(data.rows());
  return data.gather_rows(idx);
}
}  // namespace detail

/// Minimizes the denoising loss with Adam; returns the per-step loss values.
inline std::vector<double> train_diffusion(DiffusionModel& m, const Tensor& data,
                                           const GenTrainConfig& cfg, nc::Rng& rng) {
  if (data.empty()) throw ConfigError("train_diffusion: empty data");
  nc::AdamState opt(cfg.lr);
  std::vector<double> losses;
  losses.reserve(cfg.steps);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    Tensor batch = detail::sample_rows(data, cfg.batch, rng);
    Tape tape;
    Var loss = dm_loss(tape, m, batch, rng);
    tape.backward(loss);
    opt.lr = detail::decayed_lr(cfg, s);
    nc::adam_step(opt, m.theta);
    losses.push_back(loss.item());
  }
  return losses;
}

/// Minimizes reconstruction + prior KL over encoder and decoder jointly.
inline std::vector<double> train_vae(VaeModel& m, const Tensor& data, const GenTrainConfig& cfg,
                                     nc::Rng& rng) {
  if (data.empty()) throw ConfigError("train_vae: empty data");
  nc::AdamState opt_phi(cfg.lr), opt_theta(cfg.lr);
  std::vector<double> losses;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    Tensor batch = detail::sample_rows(data, cfg.batch, rng);
    Tape tape;
    auto terms = vae_elbo(tape, m, batch, rng);
    Var total = nc::add(terms.recon, terms.prior_kl);
    tape.backward(total);
    opt_phi.lr = opt_theta.lr = detail::decayed_lr(cfg, s);
    nc::adam_step(opt_phi, m.phi);
    nc::adam_step(opt_theta, m.theta);
    losses.push_back(total.item());
  }
  return losses;
}

}  // namespace gasdro::gen
