#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gasdro/dro/adversary.hpp"
#include "gasdro/dro/forecast.hpp"

namespace gasdro::theory {

using nc::Tape;
using nc::Tensor;
using nc::Var;

/// P_theta = N(theta, 1) against the nominal N(0, 1), f(w, x) = (x - w)^2.
/// J(theta) = theta^2 / 2, which equals KL(P0 || P_theta).
struct GaussianToy {
  double theta = 0.0;
  double w = 0.0;
  double eps = 0.5;
};

inline double toy_reconstruction(double theta) { return 0.5 * theta * theta; }

// E_{N(theta,1)} (x - w)^2
inline double toy_expected_loss(double theta, double w) { return (theta - w) * (theta - w) + 1.0; }

// phi(w) = max over the budget = (|w| + sqrt(2 eps))^2 + 1
inline double toy_phi(double w, double eps) {
  const double r = std::abs(w) + std::sqrt(2.0 * eps);
  return r * r + 1.0;
}

struct ToyOptimum {
  double theta = 0.0;       // closed form
  double value = 0.0;
  double grid_theta = 0.0;  // grid search over the feasible interval
  double grid_value = 0.0;
};

inline ToyOptimum toy_inner_optimum(const GaussianToy& toy, std::size_t grid_points = 200001) {
  if (!(toy.eps >= 0.0)) throw ConfigError("toy: eps must be non-negative");
  const double r = std::sqrt(2.0 * toy.eps);
  ToyOptimum o;
  o.theta = toy.w > 0.0 ? -r : r;
  o.value = toy_phi(toy.w, toy.eps);
  o.grid_value = -1.0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double th =
        grid_points == 1 ? 0.0
                         : -r + 2.0 * r * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    const double v = toy_expected_loss(th, toy.w);
    if (v > o.grid_value) {
      o.grid_value = v;
      o.grid_theta = th;
    }
  }
  return o;
}

/// The toy as an inner player. Samples are x ~ N(theta, 1), one per row.
/// J is the closed form, so reconstruction needs no data. An optional box
/// |theta| <= box is enforced after each optimizer step via `project`.
struct ToyAdversary {
  using Samples = Tensor;

  nc::ParamVector theta;
  double reference = 0.0;
  double box = 0.0;  // 0 disables the box

  explicit ToyAdversary(double theta0 = 0.0, double theta_box = 0.0) : box(theta_box) {
    theta.add_segment("theta", 1, 1);
    theta.values()[0] = theta0;
    reference = theta0;
  }

  double value() const { return theta.values()[0]; }

  Samples draw(std::size_t n, nc::Rng& rng, dro::Source src) {
    const double m = src == dro::Source::reference ? reference : value();
    Tensor x(n, 1);
    for (auto& v : x.values()) v = m + rng.normal();
    return x;
  }
  Tensor outcomes(const Samples& s) const { return s; }
  Var log_density(Tape& tape, const Samples& s) {
    Var th = tape.parameter(theta, 0);
    Var ones = tape.constant(Tensor(s.rows(), 1, 1.0));
    Var diff = nc::sub(tape.constant(s), nc::matmul(ones, th));
    return nc::scale(nc::square(diff), -0.5);
  }
  Var ratio(Tape& tape, const Samples& s) {
    Tensor ref_lp(s.rows(), 1);
    for (std::size_t i = 0; i < s.rows(); ++i) ref_lp[i] = -0.5 * (s[i] - reference) * (s[i] - reference);
    return nc::exp(nc::sub(log_density(tape, s), tape.constant(std::move(ref_lp))));
  }
  Var reconstruction(Tape& tape) {
    return nc::scale(nc::square(tape.parameter(theta, 0)), 0.5);
  }
  double measure_reconstruction() const { return toy_reconstruction(value()); }
  nc::ParamVector& params() { return theta; }
  void refresh_reference() { reference = value(); }
  void project() {
    if (box > 0.0) theta.values()[0] = std::clamp(theta.values()[0], -box, box);
  }
};

/// f(w, x) = (x - w)^2 with scalar w.
struct ToyLoss {
  nc::ParamVector w;

  explicit ToyLoss(double w0 = 0.0) {
    w.add_segment("w", 1, 1);
    w.values()[0] = w0;
  }
  double value() const { return w.values()[0]; }

  std::vector<double> per_sample(const Tensor& x) const {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = (x[i] - value()) * (x[i] - value());
    return out;
  }
  Var record(Tape& tape, const Tensor& x) {
    Var wv = tape.parameter(w, 0);
    Var ones = tape.constant(Tensor(x.rows(), 1, 1.0));
    return nc::mean(nc::square(nc::sub(tape.constant(x), nc::matmul(ones, wv))));
  }
  nc::ParamVector& params() { return w; }
};

static_assert(dro::Adversary<ToyAdversary>);
static_assert(dro::LossFn<ToyLoss>);

// KL(N(0,1) || N(theta,1)) by composite Simpson quadrature on [-40, 40].
inline double toy_kl_quadrature(double theta, std::size_t intervals = 40000) {
  const double lo = -40.0, hi = 40.0;
  const double h = (hi - lo) / static_cast<double>(intervals);
  auto g = [theta](double x) {
    const double p0 = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::acos(-1.0));
    const double log_ratio = -0.5 * x * x + 0.5 * (x - theta) * (x - theta);
    return p0 * log_ratio;
  };
  double s = g(lo) + g(hi);
  for (std::size_t i = 1; i < intervals; ++i) s += g(lo + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace gasdro::theory
