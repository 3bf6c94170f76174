#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gasdro/dro/solver.hpp"
#include "gasdro/theory/toy.hpp"

namespace gasdro::theory {

/// One probe outcome. `worst_slack` is the smallest (bound - measured) seen;
/// negative means a violation.
struct ProbeReport {
  std::string name;
  std::size_t trials = 0;
  std::size_t passes = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  std::vector<std::string> notes;

  bool passed() const { return trials > 0 && passes == trials; }

  void record(bool ok, double slack) {
    ++trials;
    passes += ok ? 1 : 0;
    worst_slack = std::min(worst_slack, slack);
  }

  std::string line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "probe=%s trials=%zu passes=%zu worst_slack=%.6g status=%s",
                  name.c_str(), trials, passes, worst_slack, passed() ? "pass" : "fail");
    return buf;
  }
};

// ---- dual descent inequality ---------------------------------------------

struct DualLemmaTrial {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// (1/K) sum <mu_k - mu, b_k>  versus  eta (1/K) sum b_k^2 + (mu - mu_1)^2 / (2 K eta)
/// for the projected update mu_{k+1} = max(mu_k - eta b_k, 0).
inline DualLemmaTrial dual_lemma_sides(double eta, double mu1, double mu, const std::vector<double>& b) {
  const double K = static_cast<double>(b.size());
  double lhs = 0.0, sq = 0.0, mk = mu1;
  for (double bk : b) {
    lhs += (mk - mu) * bk;
    sq += bk * bk;
    mk = std::max(mk - eta * bk, 0.0);
  }
  return {lhs / K, eta * sq / K + (mu - mu1) * (mu - mu1) / (2.0 * K * eta)};
}

inline ProbeReport check_dual_lemma(std::size_t trials, nc::Rng& rng, double slack = 1e-9) {
  ProbeReport rep;
  rep.name = "dual-lemma";
  for (std::size_t t = 0; t < trials; ++t) {
    const double eta = 1.0 - rng.uniform();  // (0, 1]
    const double mu1 = rng.uniform(0.0, 5.0);
    const double mu = rng.uniform(0.0, 5.0);
    const std::size_t K = 1 + rng.below(200);
    std::vector<double> b(K);
    for (auto& v : b) v = rng.uniform(-3.0, 3.0);
    auto s = dual_lemma_sides(eta, mu1, mu, b);
    rep.record(s.lhs <= s.rhs + slack, s.rhs - s.lhs);
  }
  return rep;
}

// ---- inner maximization error ------------------------------------------------

struct Theorem1Config {
  double eps = 0.5;
  double w = 0.0;
  double mu1 = 4.0;     // initial multiplier
  double c = 2.0;       // dual step eta = c / sqrt(K)
  double lr = 0.1;      // Adam step on theta
  std::size_t ascent_steps = 10;
  double box = 1.5;     // |theta| <= box, bounds J by box^2 / 2
  std::size_t samples = 10000;  // Monte-Carlo draws per epoch and per evaluation
  std::vector<std::size_t> K_list{25, 100, 400};
  double kl_slack = 0.1;
};

struct Theorem1Row {
  std::size_t K = 0;
  double eta = 0.0;
  double gap = 0.0;       // value* - mean_k E_{P_theta_k} f
  double se = 0.0;        // Monte-Carlo standard error of the gap
  double jbar = 0.0;      // max J over the run
  double bound = 0.0;     // max{eps, jbar} mu1 / sqrt(K)
  double mean_kl = 0.0;   // mean_k KL(P0 || P_theta_k)
};

struct Theorem1Result {
  double optimum = 0.0;
  std::vector<Theorem1Row> rows;
  ProbeReport report;
};

/// Runs the solver's inner loop (policy-gradient objective) on the Gaussian toy
/// for every K, starting from the nominal theta = 0. E_{P_theta_k} f is
/// estimated with fresh draws after each epoch.
inline Theorem1Result check_theorem1(const Theorem1Config& cfg, nc::Rng& rng) {
  Theorem1Result out;
  out.report.name = "theorem1";
  GaussianToy toy{0.0, cfg.w, cfg.eps};
  auto opt = toy_inner_optimum(toy);
  if (std::abs(opt.grid_value - opt.value) > 1e-6)
    out.report.notes.push_back("grid and closed-form optimum disagree");
  out.optimum = opt.grid_value;
  for (std::size_t K : cfg.K_list) {
    if (K == 0) throw ConfigError("theorem1: K must be positive");
    nc::Rng run = rng.derive(K);
    ToyAdversary adv(0.0, cfg.box);
    ToyLoss loss(cfg.w);
    dro::DualState dual{cfg.mu1, cfg.c / std::sqrt(static_cast<double>(K)), cfg.eps};
    dro::InnerConfig ic;
    ic.epochs = K;
    ic.samples = cfg.samples;
    ic.lr = cfg.lr;
    ic.ascent_steps = cfg.ascent_steps;
    ic.ppo.kind = dro::ObjectiveKind::vpg;
    nc::Rng eval = rng.derive(0xE000 + K);
    double sum_f = 0.0, sum_var = 0.0, sum_kl = 0.0, jbar = 0.0;
    dro::inner_max(loss, adv, dual, ic, run, [&](const dro::InnerEpoch&) {
      const double th = adv.value();
      double m = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < cfg.samples; ++i) {
        const double x = th + eval.normal();
        const double f = (x - cfg.w) * (x - cfg.w);
        m += f;
        m2 += f * f;
      }
      m /= static_cast<double>(cfg.samples);
      const double var = m2 / static_cast<double>(cfg.samples) - m * m;
      sum_f += m;
      sum_var += var / static_cast<double>(cfg.samples);
      sum_kl += toy_reconstruction(th);
      jbar = std::max(jbar, toy_reconstruction(th));
    });
    const double Kd = static_cast<double>(K);
    Theorem1Row row;
    row.K = K;
    row.eta = dual.eta;
    row.gap = out.optimum - sum_f / Kd;
    row.se = std::sqrt(sum_var) / Kd;
    row.jbar = jbar;
    row.bound = std::max(cfg.eps, jbar) * cfg.mu1 / std::sqrt(Kd);
    row.mean_kl = sum_kl / Kd;
    out.rows.push_back(row);
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    const auto& r = out.rows[i];
    out.report.record(r.gap <= r.bound + 3.0 * r.se, r.bound + 3.0 * r.se - r.gap);
    if (i > 0) {
      const auto& p = out.rows[i - 1];
      const double tol = 3.0 * std::sqrt(r.se * r.se + p.se * p.se);
      out.report.record(r.gap <= p.gap + tol, p.gap + tol - r.gap);
    }
  }
  if (!out.rows.empty()) {
    const auto& last = out.rows.back();
    out.report.record(last.mean_kl <= cfg.eps + cfg.kl_slack, cfg.eps + cfg.kl_slack - last.mean_kl);
  }
  return out;
}

// ---- Moreau envelope --------------------------------------------------------

struct MoreauProbe {
  double beta = 1.0;
  double grid_lo = -10.0;
  double grid_hi = 10.0;
  std::size_t grid_points = 200001;

  double resolution() const {
    return (grid_hi - grid_lo) / static_cast<double>(grid_points - 1);
  }
  void validate() const {
    if (!(beta > 0.0)) throw ConfigError("MoreauProbe: beta must be positive");
    if (!(grid_lo < grid_hi) || grid_points < 3) throw ConfigError("MoreauProbe: bad grid");
  }
};

struct MoreauEstimate {
  double w_hat = 0.0;
  double grad_norm = 0.0;  // 2 beta |w - w_hat|
};

/// w_hat = argmin over the grid of phi(w') + beta (w - w')^2.
inline MoreauEstimate estimate_moreau_grad(const std::function<double(double)>& phi, double w,
                                           const MoreauProbe& probe) {
  probe.validate();
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < probe.grid_points; ++i) {
    const double wp = probe.grid_lo + probe.resolution() * static_cast<double>(i);
    const double v = phi(wp) + probe.beta * (w - wp) * (w - wp);
    if (v < best) {
      best = v;
      arg = i;
    }
  }
  if (arg == 0 || arg + 1 == probe.grid_points)
    throw ConfigError("estimate_moreau_grad: minimizer on the grid boundary; widen the grid");
  const double w_hat = probe.grid_lo + probe.resolution() * static_cast<double>(arg);
  return {w_hat, 2.0 * probe.beta * std::abs(w - w_hat)};
}

// ---- outer convergence trend --------------------------------------------------

struct Theorem2Config {
  double eps = 0.5;
  double w0 = 2.0;
  std::size_t H = 15;
  std::size_t K = 10;
  std::size_t samples = 2000;   // inner draws per epoch
  std::size_t n = 2000;         // |S_j|
  double lambda = 0.1;
  double inner_lr = 0.1;
  std::size_t ascent_steps = 5;
  double mu1 = 2.0;
  double eta = 0.5;
  double box = 1.5;
  MoreauProbe probe{};
};

struct Theorem2Result {
  std::vector<double> w;           // w_j after each outer iteration
  std::vector<double> grad_norms;  // Moreau gradient estimates at w_j
  double slope = 0.0;              // least-squares slope of grad_norms vs j
  ProbeReport report;
};

inline double ls_slope(const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(i + 1);
    sx += x;
    sy += y[i];
    sxx += x * x;
    sxy += x * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Full outer loop on the toy; the envelope gradient uses the closed-form phi.
inline Theorem2Result check_theorem2_trend(const Theorem2Config& cfg, nc::Rng& rng) {
  Theorem2Result out;
  out.report.name = "theorem2-trend";
  ToyAdversary adv(0.0, cfg.box);
  ToyLoss loss(cfg.w0);
  dro::DualState dual{cfg.mu1, cfg.eta, cfg.eps};
  dro::SolverConfig sc;
  sc.outer_iterations = 1;
  sc.samples = cfg.n;
  sc.lambda = cfg.lambda;
  sc.outer_batch = cfg.n;
  sc.adam_outer = false;
  sc.inner.epochs = cfg.K;
  sc.inner.samples = cfg.samples;
  sc.inner.lr = cfg.inner_lr;
  sc.inner.ascent_steps = cfg.ascent_steps;
  sc.inner.ppo.kind = dro::ObjectiveKind::vpg;
  auto phi = [eps = cfg.eps](double w) { return toy_phi(w, eps); };
  for (std::size_t j = 0; j < cfg.H; ++j) {
    dro::outer_min(loss, adv, dual, sc, rng);
    out.w.push_back(loss.value());
    out.grad_norms.push_back(estimate_moreau_grad(phi, loss.value(), cfg.probe).grad_norm);
  }
  out.slope = ls_slope(out.grad_norms);
  out.report.record(out.slope < 0.0, -out.slope);
  return out;
}

// ---- closed-form identities -----------------------------------------------------

inline ProbeReport check_toy_identities() {
  ProbeReport rep;
  rep.name = "toy-identities";
  for (double th : {-2.0, -0.5, 0.0, 0.3, 1.0, 1.7}) {
    const double d = std::abs(toy_kl_quadrature(th) - toy_reconstruction(th));
    rep.record(d <= 1e-12, 1e-12 - d);
  }
  for (double w : {0.0, 0.5, 1.0, -1.5}) {
    auto o = toy_inner_optimum({0.0, w, 0.5});
    const double d = std::abs(o.grid_value - o.value);
    rep.record(d <= 1e-6, 1e-6 - d);
  }
  // 2 beta (w - w_hat) = phi'(w_hat) on the closed form (beta = 1, eps = 0.5, w = 2).
  MoreauProbe probe;
  auto phi = [](double v) { return toy_phi(v, 0.5); };
  auto est = estimate_moreau_grad(phi, 2.0, probe);
  const double dphi = 2.0 * (std::abs(est.w_hat) + 1.0) * (est.w_hat >= 0 ? 1.0 : -1.0);
  const double d = std::abs(2.0 * probe.beta * (2.0 - est.w_hat) - dphi);
  const double tol = 4.0 * probe.beta * probe.resolution() + 1e-9;
  rep.record(d <= tol, tol - d);
  return rep;
}

}  // namespace gasdro::theory
