#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/genmodels/schedule.hpp"
#include "gasdro/numcore/autograd.hpp"
#include "gasdro/numcore/mlp.hpp"
#include "gasdro/numcore/rng.hpp"

namespace gasdro::gen {

using nc::Tape;
using nc::Tensor;
using nc::Var;

inline constexpr std::size_t kTimeEmbeddingWidth = 3;

// (t/T, sin(2 pi t/T), cos(2 pi t/T))
inline std::array<double, kTimeEmbeddingWidth> time_embedding(std::size_t t, std::size_t T) {
  const double u = static_cast<double>(t) / static_cast<double>(T);
  return {u, std::sin(2.0 * std::numbers::pi * u), std::cos(2.0 * std::numbers::pi * u)};
}

/// Discrete-time diffusion model with an MLP noise predictor s_theta(x_t, t).
struct DiffusionModel {
  NoiseSchedule schedule;
  nc::MlpSpec denoiser;
  nc::ParamVector theta;
  std::size_t data_dim = 0;
  std::size_t fine_tuned_steps = 1;  // the last reverse steps t = 1..T_ft

  std::size_t T() const { return schedule.T; }

  bool is_fine_tuned(std::size_t t) const { return t <= fine_tuned_steps; }

  // Reverse-step noise std: sigma_samp on fine-tuned steps, sqrt(sigma_t^2)
  // floored at 1e-4 elsewhere.
  double step_std(std::size_t t) const {
    if (is_fine_tuned(t)) return schedule.sigma_samp;
    return std::max(std::sqrt(schedule.sigma2.at(t)), 1e-4);
  }

  void validate() const {
    if (denoiser.input_width() != data_dim + kTimeEmbeddingWidth)
      throw ShapeError("DiffusionModel: denoiser input must be data_dim + time embedding");
    if (denoiser.output_width() != data_dim)
      throw ShapeError("DiffusionModel: denoiser output must equal data_dim");
    if (fine_tuned_steps < 1 || fine_tuned_steps > schedule.T)
      throw ConfigError("DiffusionModel: need 1 <= T_ft <= T");
    nc::check_mlp_layout(denoiser, theta);
  }
};

inline DiffusionModel make_diffusion_model(NoiseSchedule schedule, std::size_t data_dim,
                                           const std::vector<std::size_t>& hidden,
                                           nc::Activation act, std::size_t fine_tuned_steps,
                                           nc::Rng& rng) {
  DiffusionModel m;
  m.schedule = std::move(schedule);
  m.data_dim = data_dim;
  m.fine_tuned_steps = fine_tuned_steps;
  m.denoiser.widths.push_back(data_dim + kTimeEmbeddingWidth);
  for (auto h : hidden) m.denoiser.widths.push_back(h);
  m.denoiser.widths.push_back(data_dim);
  m.denoiser.hidden = act;
  m.theta = nc::init_mlp_params(m.denoiser, rng);
  m.validate();
  return m;
}

struct ForwardSample {
  Tensor x_t;
  Tensor noise;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) nu, nu drawn row-major from rng.
inline ForwardSample forward_sample(const NoiseSchedule& s, const Tensor& x0, std::size_t t,
                                    nc::Rng& rng) {
  if (t < 1 || t > s.T) throw ConfigError("forward_sample: step out of range");
  ForwardSample out{x0, x0};
  const double a = std::sqrt(s.alpha_bar[t]);
  const double b = std::sqrt(1.0 - s.alpha_bar[t]);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double nu = rng.normal();
    out.noise[i] = nu;
    out.x_t[i] = a * x0[i] + b * nu;
  }
  return out;
}

// Rows [x_t(i), embedding(steps[i])].
inline Tensor denoiser_input(const Tensor& x_t, const std::vector<std::size_t>& steps,
                             std::size_t T) {
  const std::size_t d = x_t.cols();
  Tensor in(x_t.rows(), d + kTimeEmbeddingWidth);
  for (std::size_t i = 0; i < x_t.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) in(i, j) = x_t(i, j);
    auto e = time_embedding(steps[i], T);
    for (std::size_t j = 0; j < kTimeEmbeddingWidth; ++j) in(i, d + j) = e[j];
  }
  return in;
}

inline Tensor denoiser_input(const Tensor& x_t, std::size_t t, std::size_t T) {
  return denoiser_input(x_t, std::vector<std::size_t>(x_t.rows(), t), T);
}

/// Adapter so losses can take any callable noise predictor.
struct MlpDenoiser {
  const nc::MlpSpec& spec;
  nc::ParamVector& params;
  Var operator()(Tape& tape, Var input) const {
    return nc::mlp_forward(tape, spec, params, input);
  }
};

struct DmLossOptions {
  // Sum over every step instead of one uniformly drawn step scaled by T.
  bool full_sum = false;
  // Independent (t, nu) draws per example in the sampled mode.
  std::size_t draws_per_example = 1;
};

// Monte-Carlo draws behind one evaluation of the denoising loss.
struct DmDraws {
  Tensor input;    // [rows, d + emb]
  Tensor noise;    // [rows, d]
  Tensor weight;   // [rows, 1], already divided by the number of examples
};

// Draw order: sampled mode loops draws, then examples, taking t then d normals;
// full-sum mode loops examples, then t = 1..T, taking d normals.
inline DmDraws draw_dm_terms(const NoiseSchedule& s, const Tensor& batch, nc::Rng& rng,
                             const DmLossOptions& opt) {
  if (batch.empty() || batch.rows() == 0) throw ConfigError("dm_loss: empty batch");
  const std::size_t n = batch.rows(), d = batch.cols(), T = s.T;
  std::vector<std::size_t> steps;
  std::vector<double> weights;
  std::vector<double> xt, nus;
  auto push = [&](std::size_t b, std::size_t t, double w) {
    const double a = std::sqrt(s.alpha_bar[t]);
    const double c = std::sqrt(1.0 - s.alpha_bar[t]);
    for (std::size_t j = 0; j < d; ++j) {
      const double nu = rng.normal();
      nus.push_back(nu);
      xt.push_back(a * batch(b, j) + c * nu);
    }
    steps.push_back(t);
    weights.push_back(w);
  };
  if (opt.full_sum) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t t = 1; t <= T; ++t) push(b, t, s.iota[t] / static_cast<double>(n));
  } else {
    const std::size_t R = std::max<std::size_t>(1, opt.draws_per_example);
    const double scale = static_cast<double>(T) / static_cast<double>(n * R);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t t = 1 + rng.below(T);
        push(b, t, scale * s.iota[t]);
      }
  }
  const std::size_t rows = steps.size();
  Tensor x_t({rows, d}, std::move(xt));
  return {denoiser_input(x_t, steps, T), Tensor({rows, d}, std::move(nus)),
          Tensor({rows, 1}, std::move(weights))};
}

/// Denoising loss E[ sum_t iota_t || nu_t - s(x_t, t) ||^2 ], recorded on `tape`.
template <class Denoiser>
Var dm_loss(Tape& tape, const NoiseSchedule& s, const Denoiser& denoiser, const Tensor& batch,
            nc::Rng& rng, const DmLossOptions& opt = {}) {
  DmDraws dr = draw_dm_terms(s, batch, rng, opt);
  Var pred = denoiser(tape, tape.constant(std::move(dr.input)));
  Var diff = nc::sub(pred, tape.constant(std::move(dr.noise)));
  Var per_row = nc::row_sum(nc::square(diff));
  return nc::sum(nc::mul(per_row, tape.constant(std::move(dr.weight))));
}

inline Var dm_loss(Tape& tape, DiffusionModel& m, const Tensor& batch, nc::Rng& rng,
                   const DmLossOptions& opt = {}) {
  return dm_loss(tape, m.schedule, MlpDenoiser{m.denoiser, m.theta}, batch, rng, opt);
}

// Value only, no recording.
inline double dm_loss_value(const DiffusionModel& m, const Tensor& batch, nc::Rng& rng,
                            const DmLossOptions& opt = {}) {
  DmDraws dr = draw_dm_terms(m.schedule, batch, rng, opt);
  Tensor pred = nc::mlp_eval(m.denoiser, m.theta, dr.input);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < pred.cols(); ++j) {
      const double e = pred(i, j) - dr.noise(i, j);
      sq += e * e;
    }
    total += dr.weight[i] * sq;
  }
  return total;
}

// mu_theta(x_t, t) = (x_t - (1 - alpha_t)/sqrt(1 - abar_t) s) / sqrt(alpha_t)
inline Tensor step_mean(const DiffusionModel& m, const nc::ParamVector& theta, const Tensor& x_t,
                        std::size_t t) {
  Tensor s = nc::mlp_eval(m.denoiser, theta, denoiser_input(x_t, t, m.T()));
  const double a = m.schedule.alpha[t];
  const double c = (1.0 - a) / std::sqrt(1.0 - m.schedule.alpha_bar[t]);
  Tensor mu = x_t;
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = (x_t[i] - c * s[i]) / std::sqrt(a);
  return mu;
}

/// One reverse path x_T .. x_0; states[k] holds x_k.
struct Trajectory {
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> step_means;   // index t: mean that produced x_{t-1}
  std::vector<std::vector<double>> noise_draws;  // index t
};

/// n reverse paths generated together. Index t of each vector is one [n, d]
/// tensor; step_means/noise_draws are populated for t = 1..T.
struct TrajectoryBatch {
  std::vector<Tensor> states;
  std::vector<Tensor> step_means;
  std::vector<Tensor> noise_draws;

  std::size_t count() const { return states.empty() ? 0 : states.front().rows(); }
  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
  const Tensor& samples() const { return states.front(); }

  Trajectory path(std::size_t i) const {
    Trajectory p;
    auto row = [i](const Tensor& t) {
      if (t.empty()) return std::vector<double>{};
      auto r = t.row_span(i);
      return std::vector<double>(r.begin(), r.end());
    };
    for (const auto& s : states) p.states.push_back(row(s));
    for (const auto& s : step_means) p.step_means.push_back(row(s));
    for (const auto& s : noise_draws) p.noise_draws.push_back(row(s));
    return p;
  }

  static TrajectoryBatch from_paths(const std::vector<Trajectory>& paths) {
    if (paths.empty()) throw ConfigError("TrajectoryBatch: no paths");
    TrajectoryBatch b;
    const std::size_t K = paths.front().states.size();
    auto stack = [&](auto member, std::size_t k) {
      std::vector<Tensor> rows;
      for (const auto& p : paths) {
        const auto& v = (p.*member).at(k);
        if (v.empty()) return Tensor{};
        rows.push_back(Tensor::row(v));
      }
      return nc::vstack(rows);
    };
    for (std::size_t k = 0; k < K; ++k) {
      b.states.push_back(stack(&Trajectory::states, k));
      b.step_means.push_back(k < paths.front().step_means.size() ? stack(&Trajectory::step_means, k)
                                                                 : Tensor{});
      b.noise_draws.push_back(
          k < paths.front().noise_draws.size() ? stack(&Trajectory::noise_draws, k) : Tensor{});
    }
    return b;
  }
};

/// Ancestral sampling: x_T ~ N(0, I), x_{t-1} = mu_theta(x_t, t) + step_std(t) w_t.
/// Draw order: x_T row-major, then w_t row-major for t = T..1.
inline TrajectoryBatch reverse_sample(const DiffusionModel& m, std::size_t n, nc::Rng& rng) {
  if (n == 0) throw ConfigError("reverse_sample: need at least one sample");
  const std::size_t T = m.T(), d = m.data_dim;
  TrajectoryBatch b;
  b.states.resize(T + 1);
  b.step_means.resize(T + 1);
  b.noise_draws.resize(T + 1);
  Tensor x(n, d);
  for (auto& v : x.values()) v = rng.normal();
  b.states[T] = x;
  for (std::size_t t = T; t >= 1; --t) {
    Tensor mu = step_mean(m, m.theta, b.states[t], t);
    Tensor w(n, d);
    for (auto& v : w.values()) v = rng.normal();
    const double sd = m.step_std(t);
    Tensor next = mu;
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += sd * w[i];
    if (!next.all_finite()) throw NumericError("reverse_sample: non-finite state");
    b.step_means[t] = std::move(mu);
    b.noise_draws[t] = std::move(w);
    b.states[t - 1] = std::move(next);
  }
  return b;
}

namespace detail {
inline void check_fine_tuned_std(const DiffusionModel& m) {
  if (!(m.schedule.sigma_samp > 0.0))
    throw NumericError("log_joint: zero sampling std on a fine-tuned step");
}
inline void check_batch_steps(const DiffusionModel& m, const TrajectoryBatch& b) {
  if (b.steps() != m.T()) throw ShapeError("trajectory length does not match the model's T");
}
}  // namespace detail

/// log P_theta(x_{0:T}) up to a theta-independent constant, restricted to the
/// fine-tuned steps: -sum_{t <= T_ft} ||x_{t-1} - mu_theta(x_t, t)||^2 / (2 sigma~_t^2).
/// Returns one entry per path, shape [n, 1].
inline Var log_joint(Tape& tape, DiffusionModel& m, const TrajectoryBatch& b) {
  detail::check_fine_tuned_std(m);
  detail::check_batch_steps(m, b);
  const std::size_t n = b.count();
  Var acc = tape.constant(Tensor(n, 1));
  for (std::size_t t = 1; t <= m.fine_tuned_steps; ++t) {
    const Tensor& xt = b.states[t];
    const Tensor& prev = b.states[t - 1];
    const double a = m.schedule.alpha[t];
    const double c = (1.0 - a) / std::sqrt(1.0 - m.schedule.alpha_bar[t]);
    const double sd = m.step_std(t);
    // x_{t-1} - mu = (x_{t-1} - x_t / sqrt(a)) + (c / sqrt(a)) s
    Tensor offset = prev;
    for (std::size_t i = 0; i < offset.size(); ++i) offset[i] -= xt[i] / std::sqrt(a);
    Var s = nc::mlp_forward(tape, m.denoiser, m.theta,
                            tape.constant(denoiser_input(xt, t, m.T())));
    Var diff = nc::add(tape.constant(std::move(offset)), nc::scale(s, c / std::sqrt(a)));
    Var term = nc::scale(nc::row_sum(nc::square(diff)), -1.0 / (2.0 * sd * sd));
    acc = nc::add(acc, term);
  }
  return acc;
}

inline std::vector<double> log_joint_values(const DiffusionModel& m, const nc::ParamVector& theta,
                                            const TrajectoryBatch& b) {
  detail::check_fine_tuned_std(m);
  detail::check_batch_steps(m, b);
  std::vector<double> out(b.count(), 0.0);
  for (std::size_t t = 1; t <= m.fine_tuned_steps; ++t) {
    Tensor mu = step_mean(m, theta, b.states[t], t);
    const Tensor& prev = b.states[t - 1];
    const double sd = m.step_std(t);
    for (std::size_t i = 0; i < mu.rows(); ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < mu.cols(); ++j) {
        const double e = prev(i, j) - mu(i, j);
        sq += e * e;
      }
      out[i] -= sq / (2.0 * sd * sd);
    }
  }
  return out;
}

inline double log_joint(const Trajectory& path, const DiffusionModel& m) {
  return log_joint_values(m, m.theta, TrajectoryBatch::from_paths({path}))[0];
}

namespace detail {
inline void check_ratio_compatible(const DiffusionModel& m, const DiffusionModel& ref) {
  if (!m.schedule.same_coefficients(ref.schedule) || m.fine_tuned_steps != ref.fine_tuned_steps)
    throw ConfigError("ppo_ratio: model and reference differ in schedule, T_ft or sigma_samp");
  if (!m.theta.same_layout(ref.theta)) throw ShapeError("ppo_ratio: parameter layouts differ");
}
}  // namespace detail

/// r_theta = P_theta(x_{0:T}) / P_theta0(x_{0:T}) over the fine-tuned steps,
/// differentiable in theta. Shape [n, 1].
inline Var ppo_ratio(Tape& tape, DiffusionModel& m, const DiffusionModel& ref,
                     const TrajectoryBatch& b) {
  detail::check_ratio_compatible(m, ref);
  Var lj = log_joint(tape, m, b);
  auto lj_ref = log_joint_values(ref, ref.theta, b);
  for (auto& v : lj_ref) v = -v;
  return nc::exp(nc::add(lj, tape.constant(Tensor::column(std::move(lj_ref)))));
}

inline std::vector<double> ppo_ratio_values(const DiffusionModel& m, const DiffusionModel& ref,
                                            const TrajectoryBatch& b) {
  detail::check_ratio_compatible(m, ref);
  auto lj = log_joint_values(m, m.theta, b);
  auto lj_ref = log_joint_values(ref, ref.theta, b);
  for (std::size_t i = 0; i < lj.size(); ++i) lj[i] = std::exp(lj[i] - lj_ref[i]);
  return lj;
}

inline double ppo_ratio(const Trajectory& path, const DiffusionModel& m,
                        const DiffusionModel& ref) {
  return ppo_ratio_values(m, ref, TrajectoryBatch::from_paths({path}))[0];
}

}  // namespace gasdro::gen
