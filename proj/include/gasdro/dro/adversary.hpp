#pragma once

#include <concepts>
#include <cstdint>
#include <vector>

#include "gasdro/genmodels/diffusion.hpp"
#include "gasdro/genmodels/vae.hpp"
#include "gasdro/numcore/autograd.hpp"

namespace gasdro::dro {

using nc::Tape;
using nc::Tensor;
using nc::Var;

enum class Source { reference, current };

/// The inner player: a parameterized sampling distribution P_theta with a
/// reconstruction loss J(theta, S0) measured on the nominal set.
///
///  draw(n, rng, src)      samples from the reference or current model
///  outcomes(s)            the data points x0 of a sample set, one per row
///  log_density(tape, s)   ln P_theta per sample up to a constant, [n, 1]
///  ratio(tape, s)         P_theta / P_reference per sample, [n, 1]
///  reconstruction(tape)   J(theta, S0), recorded
///  measure_reconstruction J(theta, S0), value only, same estimator
template <class A>
concept Adversary = requires(A& a, const A& ca, Tape& tape, nc::Rng& rng,
                             const typename A::Samples& s) {
  { a.draw(std::size_t{}, rng, Source::current) } -> std::same_as<typename A::Samples>;
  { ca.outcomes(s) } -> std::same_as<Tensor>;
  { a.log_density(tape, s) } -> std::same_as<Var>;
  { a.ratio(tape, s) } -> std::same_as<Var>;
  { a.reconstruction(tape) } -> std::same_as<Var>;
  { ca.measure_reconstruction() } -> std::convertible_to<double>;
  { a.params() } -> std::same_as<nc::ParamVector&>;
  a.refresh_reference();
};

/// Diffusion model as the inner player. Samples are full reverse trajectories;
/// J is the denoising loss over the nominal set with a fixed evaluation seed,
/// so that repeated measurements of the same theta agree exactly.
struct DiffusionAdversary {
  using Samples = gen::TrajectoryBatch;

  gen::DiffusionModel model;
  gen::DiffusionModel reference;
  Tensor nominal;
  std::uint64_t eval_seed = 0x5EED;
  gen::DmLossOptions j_options{false, 4};

  DiffusionAdversary(gen::DiffusionModel pretrained, Tensor nominal_set,
                     std::uint64_t evaluation_seed = 0x5EED)
      : model(pretrained), reference(std::move(pretrained)), nominal(std::move(nominal_set)),
        eval_seed(evaluation_seed) {}

  Samples draw(std::size_t n, nc::Rng& rng, Source src) {
    return gen::reverse_sample(src == Source::reference ? reference : model, n, rng);
  }
  Tensor outcomes(const Samples& s) const { return s.samples(); }
  Var log_density(Tape& tape, const Samples& s) { return gen::log_joint(tape, model, s); }
  Var ratio(Tape& tape, const Samples& s) { return gen::ppo_ratio(tape, model, reference, s); }
  Var reconstruction(Tape& tape) {
    nc::Rng r(eval_seed);
    return gen::dm_loss(tape, model, nominal, r, j_options);
  }
  double measure_reconstruction() const {
    nc::Rng r(eval_seed);
    return gen::dm_loss_value(model, nominal, r, j_options);
  }
  nc::ParamVector& params() { return model.theta; }
  void refresh_reference() { reference.theta = model.theta; }
};

/// VAE as the inner player with a frozen encoder. Samples are (x, z) pairs:
/// z from the encoder on nominal rows, perturbed in an eps_z ball, then
/// x ~ p_reference(x | z).
struct VaeAdversary {
  struct Samples {
    Tensor x;
    Tensor z;
  };

  gen::VaeModel model;
  nc::ParamVector reference_theta;
  Tensor nominal;
  Tensor nominal_codes;  // fixed Z0 for the reconstruction loss
  double eps_z = 0.25;

  VaeAdversary(gen::VaeModel pretrained, Tensor nominal_set, double latent_radius,
               std::uint64_t code_seed = 0xC0DE)
      : model(std::move(pretrained)), nominal(std::move(nominal_set)), eps_z(latent_radius) {
    reference_theta = model.theta;
    nc::Rng r(code_seed);
    nominal_codes = gen::encode_sample(model, nominal, r);
  }

  Samples draw(std::size_t n, nc::Rng& rng, Source src) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = rng.below(nominal.rows());
    Tensor z = gen::latent_perturb(gen::encode_sample(model, nominal.gather_rows(idx), rng),
                                   eps_z, rng);
    const auto& theta = src == Source::reference ? reference_theta : model.theta;
    Tensor x = gen::decode(model.decoder, theta, z);
    const double sd = std::sqrt(model.decoder_var);
    for (auto& v : x.values()) v += sd * rng.normal();
    return {std::move(x), std::move(z)};
  }
  Tensor outcomes(const Samples& s) const { return s.x; }
  Var log_density(Tape& tape, const Samples& s) {
    Var mu = nc::mlp_forward(tape, model.decoder, model.theta, tape.constant(s.z));
    return nc::scale(nc::row_sum(nc::square(nc::sub(tape.constant(s.x), mu))),
                     -1.0 / (2.0 * model.decoder_var));
  }
  Var ratio(Tape& tape, const Samples& s) {
    return gen::vae_ratio(tape, s.x, s.z, model, reference_theta);
  }
  Var reconstruction(Tape& tape) {
    return gen::vae_recon_fixed(tape, model, nominal, nominal_codes);
  }
  double measure_reconstruction() const {
    return gen::vae_recon_fixed_value(model, nominal, nominal_codes);
  }
  nc::ParamVector& params() { return model.theta; }
  void refresh_reference() { reference_theta = model.theta; }
};

static_assert(Adversary<DiffusionAdversary>);
static_assert(Adversary<VaeAdversary>);

}  // namespace gasdro::dro
