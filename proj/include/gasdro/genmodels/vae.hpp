#pragma once

#include <cmath>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/autograd.hpp"
#include "gasdro/numcore/mlp.hpp"
#include "gasdro/numcore/rng.hpp"

namespace gasdro::gen {

using nc::Tape;
using nc::Tensor;
using nc::Var;

/// Gaussian VAE: encoder phi emits [mu, logvar] (width 2 d_z), decoder theta
/// emits the reconstruction mean, p(x|z) = N(mu_theta(z), decoder_var I).
struct VaeModel {
  nc::MlpSpec encoder;
  nc::ParamVector phi;
  nc::MlpSpec decoder;
  nc::ParamVector theta;
  std::size_t data_dim = 0;
  std::size_t latent_dim = 0;
  double decoder_var = 0.25;

  void validate() const {
    if (encoder.input_width() != data_dim || encoder.output_width() != 2 * latent_dim)
      throw ShapeError("VaeModel: encoder must map data_dim -> 2 * latent_dim");
    if (decoder.input_width() != latent_dim || decoder.output_width() != data_dim)
      throw ShapeError("VaeModel: decoder must map latent_dim -> data_dim");
    if (!(decoder_var > 0.0)) throw ConfigError("VaeModel: decoder variance must be positive");
    nc::check_mlp_layout(encoder, phi);
    nc::check_mlp_layout(decoder, theta);
  }
};

inline VaeModel make_vae_model(std::size_t data_dim, std::size_t latent_dim,
                               const std::vector<std::size_t>& hidden, nc::Activation act,
                               double decoder_var, nc::Rng& rng) {
  VaeModel m;
  m.data_dim = data_dim;
  m.latent_dim = latent_dim;
  m.decoder_var = decoder_var;
  m.encoder.widths = {data_dim};
  m.decoder.widths = {latent_dim};
  for (auto h : hidden) {
    m.encoder.widths.push_back(h);
    m.decoder.widths.push_back(h);
  }
  m.encoder.widths.push_back(2 * latent_dim);
  m.decoder.widths.push_back(data_dim);
  m.encoder.hidden = m.decoder.hidden = act;
  m.phi = nc::init_mlp_params(m.encoder, rng);
  m.theta = nc::init_mlp_params(m.decoder, rng);
  m.validate();
  return m;
}

struct ElboTerms {
  Var recon;     // mean_x E_q[ ||x - mu_theta(z)||^2 / (2 sigma^2) ], constant dropped
  Var prior_kl;  // mean_x KL(q_phi(z|x) || N(0, I))
};

/// One reparameterized draw z = mu + exp(logvar / 2) * nu per example (nu
/// drawn row-major). The Gaussian normalizer (d/2) log(2 pi sigma^2) is
/// dropped from the reconstruction term.
inline ElboTerms vae_elbo(Tape& tape, VaeModel& m, const Tensor& batch, nc::Rng& rng) {
  if (batch.empty() || batch.rows() == 0) throw ConfigError("vae_elbo: empty batch");
  if (batch.cols() != m.data_dim) throw ShapeError("vae_elbo: batch width != data_dim");
  const std::size_t n = batch.rows(), dz = m.latent_dim;
  Var x = tape.constant(batch);
  Var enc = nc::mlp_forward(tape, m.encoder, m.phi, x);
  Var mu = nc::slice_cols(enc, 0, dz);
  Var logvar = nc::slice_cols(enc, dz, 2 * dz);
  Tensor nu(n, dz);
  for (auto& v : nu.values()) v = rng.normal();
  Var z = nc::add(mu, nc::mul(nc::exp(nc::scale(logvar, 0.5)), tape.constant(std::move(nu))));
  Var recon_mean = nc::mlp_forward(tape, m.decoder, m.theta, z);
  Var err = nc::sub(x, recon_mean);
  Var recon =
      nc::scale(nc::sum(nc::square(err)), 1.0 / (2.0 * m.decoder_var * static_cast<double>(n)));
  // KL = 1/2 sum (mu^2 + e^logvar - 1 - logvar)
  Var kl_terms = nc::sub(nc::add(nc::square(mu), nc::exp(logvar)), nc::add_scalar(logvar, 1.0));
  Var prior_kl = nc::scale(nc::sum(kl_terms), 0.5 / static_cast<double>(n));
  return {recon, prior_kl};
}

struct LatentCode {
  Tensor mean;
  Tensor logvar;
};

inline LatentCode encode(const VaeModel& m, const Tensor& x) {
  Tensor enc = nc::mlp_eval(m.encoder, m.phi, x);
  const std::size_t dz = m.latent_dim;
  LatentCode c{Tensor(x.rows(), dz), Tensor(x.rows(), dz)};
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < dz; ++j) {
      c.mean(i, j) = enc(i, j);
      c.logvar(i, j) = enc(i, dz + j);
    }
  return c;
}

// z = mu + sigma * nu for each row of x.
inline Tensor encode_sample(const VaeModel& m, const Tensor& x, nc::Rng& rng) {
  LatentCode c = encode(m, x);
  Tensor z = c.mean;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * c.logvar[i]) * rng.normal();
  return z;
}

inline Tensor decode(const nc::MlpSpec& decoder, const nc::ParamVector& theta, const Tensor& z) {
  return nc::mlp_eval(decoder, theta, z);
}

namespace detail {
inline std::vector<double> row_sq_err(const Tensor& x, const Tensor& mu) {
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double e = x(i, j) - mu(i, j);
      out[i] += e * e;
    }
  return out;
}
}  // namespace detail

/// p_theta(x, z) / p_theta_old(x, z) with a shared prior on z:
/// exp( (||x - mu_old(z)||^2 - ||x - mu_theta(z)||^2) / (2 sigma^2) ), per row.
inline std::vector<double> vae_ratio(const Tensor& x, const Tensor& z, const VaeModel& m,
                                     const nc::ParamVector& theta_old) {
  if (!m.theta.same_layout(theta_old)) throw ShapeError("vae_ratio: decoder layouts differ");
  auto e_new = detail::row_sq_err(x, decode(m.decoder, m.theta, z));
  auto e_old = detail::row_sq_err(x, decode(m.decoder, theta_old, z));
  std::vector<double> r(x.rows());
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = std::exp((e_old[i] - e_new[i]) / (2.0 * m.decoder_var));
  return r;
}

// Recorded version, differentiable in the decoder parameters. Shape [n, 1].
inline Var vae_ratio(Tape& tape, const Tensor& x, const Tensor& z, VaeModel& m,
                     const nc::ParamVector& theta_old) {
  if (!m.theta.same_layout(theta_old)) throw ShapeError("vae_ratio: decoder layouts differ");
  auto e_old = detail::row_sq_err(x, decode(m.decoder, theta_old, z));
  Var mu = nc::mlp_forward(tape, m.decoder, m.theta, tape.constant(z));
  Var e_new = nc::row_sum(nc::square(nc::sub(tape.constant(x), mu)));
  Var log_r = nc::scale(nc::sub(tape.constant(Tensor::column(std::move(e_old))), e_new),
                        1.0 / (2.0 * m.decoder_var));
  return nc::exp(log_r);
}

/// z + u with u uniform in the l2 ball of radius eps_z (per row).
inline Tensor latent_perturb(const Tensor& z, double eps_z, nc::Rng& rng) {
  if (eps_z < 0.0) throw ConfigError("latent_perturb: radius must be non-negative");
  Tensor out = z;
  if (eps_z == 0.0) return out;
  const std::size_t d = z.cols();
  for (std::size_t i = 0; i < z.rows(); ++i) {
    std::vector<double> dir(d);
    double norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    const double radius = eps_z * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    for (std::size_t j = 0; j < d; ++j)
      out(i, j) += norm > 0.0 ? radius * dir[j] / norm : 0.0;
  }
  return out;
}

/// Fixed-code reconstruction loss over a nominal set: mean ||x - mu_theta(z)||^2 / (2 sigma^2).
inline Var vae_recon_fixed(Tape& tape, VaeModel& m, const Tensor& x, const Tensor& z) {
  Var mu = nc::mlp_forward(tape, m.decoder, m.theta, tape.constant(z));
  return nc::scale(nc::sum(nc::square(nc::sub(tape.constant(x), mu))),
                   1.0 / (2.0 * m.decoder_var * static_cast<double>(x.rows())));
}

inline double vae_recon_fixed_value(const VaeModel& m, const Tensor& x, const Tensor& z) {
  auto e = detail::row_sq_err(x, decode(m.decoder, m.theta, z));
  double s = 0.0;
  for (double v : e) s += v;
  return s / (2.0 * m.decoder_var * static_cast<double>(x.rows()));
}

}  // namespace gasdro::gen
