#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gasdro/dro/adversary.hpp"
#include "gasdro/dro/dual.hpp"
#include "gasdro/dro/forecast.hpp"
#include "gasdro/numcore/adam.hpp"

namespace gasdro::dro {

// ---- surrogates -----------------------------------------------------------

/// mean_i min(r_i f_i, clip(r_i, 1 - kappa, 1 + kappa) f_i)
inline Var ppo_surrogate(Tape& tape, Var ratio, const std::vector<double>& f, double kappa) {
  if (ratio.rows() != f.size() || ratio.cols() != 1)
    throw ShapeError("ppo_surrogate: ratio must be [n,1] matching f");
  Var fv = tape.constant(Tensor::column(f));
  Var unclipped = nc::mul(ratio, fv);
  Var clipped = nc::mul(nc::clamp(ratio, 1.0 - kappa, 1.0 + kappa), fv);
  return nc::mean(nc::minimum(unclipped, clipped));
}

/// mean_i ln P_theta(sample_i) f_i
inline Var vpg_surrogate(Tape& tape, Var log_density, const std::vector<double>& f) {
  if (log_density.rows() != f.size() || log_density.cols() != 1)
    throw ShapeError("vpg_surrogate: log density must be [n,1] matching f");
  return nc::mean(nc::mul(log_density, tape.constant(Tensor::column(f))));
}

struct ObjectiveTerms {
  Var objective;  // surrogate - mu J, to be maximized
  double surrogate = 0.0;
  double reconstruction = 0.0;
};

/// Lagrangian-relaxed inner objective. `f` holds f(w, x0) per sample, computed
/// with w held fixed. PPO samples must come from the reference model, VPG
/// samples from the current one.
template <Adversary A>
ObjectiveTerms lagrangian_objective(Tape& tape, A& gen, double mu, const PpoConfig& cfg,
                                    const typename A::Samples& samples,
                                    const std::vector<double>& f) {
  if (f.empty()) throw ConfigError("lagrangian_objective: empty sample set");
  cfg.validate();
  Var surrogate = cfg.kind == ObjectiveKind::ppo
                      ? ppo_surrogate(tape, gen.ratio(tape, samples), f, cfg.kappa)
                      : vpg_surrogate(tape, gen.log_density(tape, samples), f);
  Var j = gen.reconstruction(tape);
  Var obj = nc::sub(surrogate, nc::scale(j, mu));
  return {obj, surrogate.item(), j.item()};
}

template <Adversary A, LossFn F>
ObjectiveTerms lagrangian_objective(Tape& tape, A& gen, F& loss, double mu, const PpoConfig& cfg,
                                    const typename A::Samples& samples) {
  return lagrangian_objective(tape, gen, mu, cfg, samples, loss.per_sample(gen.outcomes(samples)));
}

// ---- diagnostics ------------------------------------------------------------

struct DiagnosticRecord {
  std::string method = "gasdro";
  std::string kind;  // "inner" per inner epoch, "outer" per outer iteration
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double objective = 0.0;
  double reconstruction = 0.0;
  double mu = 0.0;
  double worst_case = 0.0;
};

using DiagnosticsSink = std::function<void(const DiagnosticRecord&)>;

// ---- inner maximization -----------------------------------------------------

struct InnerConfig {
  std::size_t epochs = 10;          // K
  std::size_t samples = 64;         // trajectories per epoch
  std::size_t ascent_steps = 1;     // Adam steps per epoch
  double lr = 1e-3;
  PpoConfig ppo{};
};

struct InnerEpoch {
  std::size_t epoch = 0;
  double objective = 0.0;
  double surrogate = 0.0;
  double reconstruction = 0.0;  // J(theta_k, S0) measured after the step
  double mu = 0.0;              // multiplier after the dual update
};

struct InnerResult {
  std::vector<InnerEpoch> epochs;
};

/// K epochs of: ascend the Lagrangian in theta (Adam on its negation), measure
/// J(theta, S0), then take one projected dual step on mu. PPO reuses one
/// reference sample set drawn at the start; VPG redraws from the current model
/// every epoch. `observe` runs after each epoch with the model in its post-step state.
template <Adversary A, LossFn F>
InnerResult inner_max(F& loss, A& gen, DualState& dual, const InnerConfig& cfg, nc::Rng& rng,
                      const std::function<void(const InnerEpoch&)>& observe = {}) {
  dual.validate();
  cfg.ppo.validate();
  if (cfg.samples == 0) throw ConfigError("inner_max: need at least one sample");
  InnerResult out;
  nc::AdamState opt(cfg.lr);
  const bool ppo = cfg.ppo.kind == ObjectiveKind::ppo;
  typename A::Samples samples{};
  std::vector<double> f;
  if (ppo && cfg.epochs > 0) {
    samples = gen.draw(cfg.samples, rng, Source::reference);
    f = loss.per_sample(gen.outcomes(samples));
  }
  for (std::size_t k = 1; k <= cfg.epochs; ++k) {
    if (!ppo) {
      samples = gen.draw(cfg.samples, rng, Source::current);
      f = loss.per_sample(gen.outcomes(samples));
    }
    InnerEpoch rec;
    rec.epoch = k;
    for (std::size_t s = 0; s < std::max<std::size_t>(1, cfg.ascent_steps); ++s) {
      Tape tape;
      auto terms = lagrangian_objective(tape, gen, dual.mu, cfg.ppo, samples, f);
      tape.backward(nc::scale(terms.objective, -1.0));
      nc::adam_step(opt, gen.params());
      if constexpr (requires { gen.project(); }) gen.project();
      if (s == 0) {
        rec.objective = terms.objective.item();
        rec.surrogate = terms.surrogate;
      }
    }
    rec.reconstruction = gen.measure_reconstruction();
    dual = dual_update(dual, rec.reconstruction);
    rec.mu = dual.mu;
    if (observe) observe(rec);
    out.epochs.push_back(rec);
  }
  return out;
}

// ---- outer minimization -----------------------------------------------------

struct SolverConfig {
  std::size_t outer_iterations = 15;  // H
  std::size_t samples = 64;           // n, size of each S_j
  double lambda = 1e-3;               // outer learning rate
  std::size_t outer_steps = 1;        // gradient steps on w per S_j
  std::size_t outer_batch = 64;
  bool adam_outer = true;             // Adam; false selects plain gradient descent
  bool refresh_reference = true;      // theta_0 <- theta after every outer iteration
  InnerConfig inner{};

  void validate() const {
    if (samples == 0) throw ConfigError("SolverConfig: n must be at least 1");
    if (!(lambda > 0.0)) throw ConfigError("SolverConfig: lambda must be positive");
    if (!(inner.lr > 0.0)) throw ConfigError("SolverConfig: inner_lr must be positive");
    if (outer_batch == 0) throw ConfigError("SolverConfig: batch must be at least 1");
  }
};

struct OuterIteration {
  std::size_t iteration = 0;
  double worst_case = 0.0;      // mean f over S_j before the w update
  double reconstruction = 0.0;  // J after the inner loop
  double mu = 0.0;
};

struct OuterResult {
  std::vector<OuterIteration> iterations;
  std::vector<InnerResult> inner;
};

/// H iterations of: inner_max, draw S_j of n points from P_theta, then
/// `outer_steps` minibatch steps on w against mean f over S_j.
template <Adversary A, LossFn F>
OuterResult outer_min(F& loss, A& gen, DualState& dual, const SolverConfig& cfg, nc::Rng& rng,
                      const DiagnosticsSink& sink = {}) {
  cfg.validate();
  OuterResult out;
  nc::AdamState opt(cfg.lambda);
  for (std::size_t j = 1; j <= cfg.outer_iterations; ++j) {
    InnerResult inner;
    if (cfg.inner.epochs > 0) inner = inner_max(loss, gen, dual, cfg.inner, rng);
    if (sink)
      for (const auto& e : inner.epochs)
        sink({"gasdro", "inner", j, e.epoch, e.objective, e.reconstruction, e.mu, 0.0});

    Tensor sj = gen.outcomes(gen.draw(cfg.samples, rng, Source::current));
    auto f = loss.per_sample(sj);
    OuterIteration it;
    it.iteration = j;
    it.worst_case = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
    it.reconstruction =
        inner.epochs.empty() ? gen.measure_reconstruction() : inner.epochs.back().reconstruction;
    it.mu = dual.mu;

    std::vector<std::size_t> order(sj.rows());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    for (std::size_t s = 0; s < cfg.outer_steps; ++s) {
      const std::size_t b = std::min(cfg.outer_batch, order.size());
      if (cursor + b > order.size()) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                   order.begin() + static_cast<std::ptrdiff_t>(cursor + b));
      cursor += b;
      Tape tape;
      Var l = loss.record(tape, sj.gather_rows(idx));
      tape.backward(l);
      if (cfg.adam_outer)
        nc::adam_step(opt, loss.params());
      else
        nc::sgd_step(cfg.lambda, loss.params());
    }
    if (cfg.refresh_reference) gen.refresh_reference();
    if (sink) sink({"gasdro", "outer", j, 0, 0.0, it.reconstruction, it.mu, it.worst_case});
    out.iterations.push_back(it);
    out.inner.push_back(std::move(inner));
  }
  return out;
}

}  // namespace gasdro::dro
