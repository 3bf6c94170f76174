#pragma once

#include <algorithm>

#include "gasdro/error.hpp"

namespace gasdro::dro {

/// Lagrange multiplier for the reconstruction-loss budget.
struct DualState {
  double mu = 0.5;    // multiplier, kept >= 0
  double eta = 0.01;  // dual step size
  double eps = 0.015; // budget on J(theta, S0)

  void validate() const {
    if (!(mu >= 0.0)) throw ConfigError("DualState: mu must be non-negative");
    if (!(eta > 0.0)) throw ConfigError("DualState: eta must be positive");
    if (!(eps > 0.0)) throw ConfigError("DualState: eps must be positive");
  }
};

/// Projected dual descent: mu <- max(mu - eta (eps - J), 0).
inline DualState dual_update(DualState d, double j_hat) {
  if (!(j_hat >= 0.0)) throw ConfigError("dual_update: measured loss must be non-negative");
  d.mu = std::max(d.mu - d.eta * (d.eps - j_hat), 0.0);
  return d;
}

enum class ObjectiveKind { vpg, ppo };

struct PpoConfig {
  double kappa = 0.4;
  ObjectiveKind kind = ObjectiveKind::ppo;

  void validate() const {
    if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("PpoConfig: kappa must lie in (0,1)");
  }
};

}  // namespace gasdro::dro
