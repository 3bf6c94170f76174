#pragma once

#include <cmath>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/params.hpp"

namespace gasdro::nc {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(double learning_rate) : lr(learning_rate) {}
};

/// Bias-corrected Adam update, then zeroes the gradient.
inline void adam_step(AdamState& s, ParamVector& p) {
  if (!(s.lr > 0.0) || !(s.beta1 > 0.0 && s.beta1 < 1.0) || !(s.beta2 > 0.0 && s.beta2 < 1.0))
    throw ConfigError("adam_step: invalid hyperparameters");
  auto& g = p.grad();
  for (double x : g)
    if (!std::isfinite(x)) throw NumericError("adam_step: non-finite gradient");
  if (s.m.empty()) {
    s.m.assign(p.size(), 0.0);
    s.v.assign(p.size(), 0.0);
  }
  if (s.m.size() != p.size()) throw ShapeError("adam_step: moment size does not match params");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto& x = p.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    x[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps_adam);
  }
  p.zero_grad();
}

// Plain gradient descent, then zeroes the gradient.
inline void sgd_step(double lr, ParamVector& p) {
  auto& g = p.grad();
  auto& x = p.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(g[i])) throw NumericError("sgd_step: non-finite gradient");
    x[i] -= lr * g[i];
  }
  p.zero_grad();
}

}  // namespace gasdro::nc
