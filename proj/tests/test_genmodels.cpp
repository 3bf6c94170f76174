#include <gtest/gtest.h>

#include <cmath>

#include "gasdro/databench/metrics.hpp"
#include "gasdro/genmodels/training.hpp"
#include "support/fd.hpp"

using namespace gasdro;
using namespace gasdro::gen;
using nc::Rng;

namespace {

DiffusionModel small_model(std::size_t T, std::size_t d, std::size_t t_ft, std::uint64_t seed) {
  Rng rng(seed);
  return make_diffusion_model(build_schedule(T, 0.05, 0.3), d, {6}, nc::Activation::tanh, t_ft, rng);
}

Tensor random_batch(std::size_t n, std::size_t d, Rng& rng) {
  Tensor x(n, d);
  for (auto& v : x.values()) v = rng.normal();
  return x;
}

Tensor bimodal(std::size_t n, Rng& rng) {
  Tensor x(n, 1);
  for (auto& v : x.values()) v = (rng.uniform() < 0.5 ? -2.0 : 2.0) + 0.3 * rng.normal();
  return x;
}

}  // namespace

TEST(Schedule, TwoStepHandValues) {
  auto s = build_schedule(2, 0.1, 0.2);
  EXPECT_NEAR(s.alpha[1], 0.9, 1e-15);
  EXPECT_NEAR(s.alpha[2], 0.8, 1e-15);
  EXPECT_NEAR(s.alpha_bar[1], 0.9, 1e-15);
  EXPECT_NEAR(s.alpha_bar[2], 0.72, 1e-15);
  EXPECT_DOUBLE_EQ(s.sigma2[1], 0.0);
  EXPECT_NEAR(s.sigma2[2], 0.2 * 0.1 / 0.28, 1e-15);
  EXPECT_NEAR(s.sigma2[2], 0.0714286, 1e-7);
  EXPECT_NEAR(s.iota[2], 1.25, 1e-12);
}

TEST(Schedule, ConstantBetaIsGeometric) {
  auto s = build_schedule(6, 0.1, 0.1);
  for (std::size_t t = 1; t <= 6; ++t) EXPECT_DOUBLE_EQ(s.alpha_bar[t], std::pow(0.9, t));
}

TEST(Schedule, IdentitiesOnRandomSchedules) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const double lo = rng.uniform(1e-4, 0.2);
    const double hi = lo + rng.uniform(0.0, 0.5);
    auto s = build_schedule(2 + rng.below(40), lo, hi);
    for (std::size_t t = 1; t <= s.T; ++t) {
      EXPECT_DOUBLE_EQ(s.alpha_bar[t], s.alpha_bar[t - 1] * s.alpha[t]);
      EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
      const double sig = (1 - s.alpha[t]) * (1 - s.alpha_bar[t - 1]) / (1 - s.alpha_bar[t]);
      EXPECT_DOUBLE_EQ(s.sigma2[t], sig);
      if (t >= 2) {
        const double w = (1 / (2 * sig)) * (1 - s.alpha[t]) * (1 - s.alpha[t]) /
                         ((1 - s.alpha_bar[t]) * s.alpha[t]);
        EXPECT_DOUBLE_EQ(s.iota[t], w);
        EXPECT_TRUE(std::isfinite(s.iota[t]));
      }
    }
  }
}

TEST(Schedule, RejectsBadRanges) {
  EXPECT_THROW(build_schedule(1, 0.1, 0.2), ConfigError);
  EXPECT_THROW(build_schedule(4, 0.3, 0.2), ConfigError);
  EXPECT_THROW(build_schedule(4, 0.0, 0.2), ConfigError);
  EXPECT_THROW(build_schedule(4, 0.1, 1.0), ConfigError);
}

TEST(ForwardSample, HandArithmetic) {
  auto s = schedule_from_alphas({0.25});
  Rng rng(1);
  Rng copy(1);
  const double nu = copy.normal();
  auto fs = forward_sample(s, Tensor::scalar(2.0), 1, rng);
  EXPECT_DOUBLE_EQ(fs.noise.item(), nu);
  EXPECT_NEAR(fs.x_t.item(), 2.0 * 0.5 + std::sqrt(0.75) * nu, 1e-15);
  // with nu = 1 the formula gives 1 + sqrt(0.75)
  EXPECT_NEAR(0.5 * 2.0 + std::sqrt(0.75) * 1.0, 1.8660, 1e-4);
}

TEST(ForwardSample, ZeroInputScalesNoise) {
  auto s = build_schedule(4, 0.1, 0.2);
  Rng rng(3);
  auto fs = forward_sample(s, Tensor(2, 3, 0.0), 3, rng);
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_DOUBLE_EQ(fs.x_t[i], std::sqrt(1 - s.alpha_bar[3]) * fs.noise[i]);
}

TEST(ForwardSample, OutOfRangeThrows) {
  auto s = build_schedule(4, 0.1, 0.2);
  Rng rng(3);
  EXPECT_THROW(forward_sample(s, Tensor::scalar(1.0), 0, rng), ConfigError);
  EXPECT_THROW(forward_sample(s, Tensor::scalar(1.0), 5, rng), ConfigError);
}

TEST(ForwardSample, MarginalMoments) {
  auto s = build_schedule(10, 0.05, 0.2);
  Rng rng(8);
  const std::size_t N = 100000, t = 4;
  auto fs = forward_sample(s, Tensor(N, 1, 1.5), t, rng);
  double m = 0.0, m2 = 0.0;
  for (double v : fs.x_t.values()) {
    m += v;
    m2 += v * v;
  }
  m /= N;
  const double var = m2 / N - m * m;
  EXPECT_NEAR(m, std::sqrt(s.alpha_bar[t]) * 1.5, 0.02);
  EXPECT_NEAR(var, 1 - s.alpha_bar[t], 0.05);
}

TEST(DmLoss, OracleDenoiserGivesZero) {
  auto s = build_schedule(8, 0.05, 0.3);
  Rng data_rng(2);
  Tensor batch = random_batch(5, 3, data_rng);
  // Recovers nu from x_t and the known clean example of each row.
  auto oracle = [&](nc::Tape& tape, nc::Var input) {
    const Tensor& in = input.value();
    Tensor out(in.rows(), 3);
    for (std::size_t i = 0; i < in.rows(); ++i) {
      const auto t = static_cast<std::size_t>(std::lround(in(i, 3) * s.T));
      const double a = std::sqrt(s.alpha_bar[t]), c = std::sqrt(1 - s.alpha_bar[t]);
      for (std::size_t j = 0; j < 3; ++j) out(i, j) = (in(i, j) - a * batch(i % 5, j)) / c;
    }
    return tape.constant(out);
  };
  Rng rng(5);
  nc::Tape tape;
  EXPECT_NEAR(dm_loss(tape, s, oracle, batch, rng).item(), 0.0, 1e-20);
}

TEST(DmLoss, ZeroDenoiserMatchesStraightLine) {
  auto m = small_model(8, 3, 2, 1);
  std::fill(m.theta.values().begin(), m.theta.values().end(), 0.0);
  Rng data_rng(2);
  Tensor batch = random_batch(6, 3, data_rng);
  Rng rng(77), replay(77);
  double expect = 0.0;
  for (std::size_t b = 0; b < 6; ++b) {
    const std::size_t t = 1 + replay.below(8);
    double sq = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double nu = replay.normal();
      sq += nu * nu;
    }
    expect += 8.0 * m.schedule.iota[t] * sq;
  }
  expect /= 6.0;
  nc::Tape tape;
  EXPECT_NEAR(dm_loss(tape, m, batch, rng).item(), expect, 1e-12);
}

TEST(DmLoss, FullSumMatchesStraightLine) {
  auto m = small_model(4, 2, 1, 3);
  std::fill(m.theta.values().begin(), m.theta.values().end(), 0.0);
  Tensor batch = Tensor::from_rows({{0.5, -1.0}});
  Rng rng(9), replay(9);
  double expect = 0.0;
  for (std::size_t t = 1; t <= 4; ++t) {
    const double a = replay.normal(), b = replay.normal();
    expect += m.schedule.iota[t] * (a * a + b * b);
  }
  nc::Tape tape;
  EXPECT_NEAR(dm_loss(tape, m, batch, rng, {true, 1}).item(), expect, 1e-12);
}

TEST(DmLoss, EmptyBatchThrows) {
  auto m = small_model(4, 2, 1, 3);
  Rng rng(1);
  nc::Tape tape;
  EXPECT_THROW(dm_loss(tape, m, Tensor{}, rng), ConfigError);
}

TEST(DmLoss, GradientMatchesFiniteDifferences) {
  auto m = small_model(6, 3, 2, 12);
  Rng data_rng(4);
  Tensor batch = random_batch(4, 3, data_rng);
  nc::Tape tape;
  Rng rng(31);
  tape.backward(dm_loss(tape, m, batch, rng));
  auto analytic = m.theta.grad();
  auto numeric = testsupport::numeric_grad(m.theta.values(), [&] {
    Rng r(31);
    return dm_loss_value(m, batch, r);
  });
  EXPECT_LE(testsupport::rel_error(analytic, numeric), 1e-4);
}

TEST(ReverseSample, OneStepZeroDenoiserHandComputation) {
  Rng init(1);
  auto m = make_diffusion_model(schedule_from_alphas({0.81}, 0.3), 1, {4}, nc::Activation::tanh, 1,
                                init);
  std::fill(m.theta.values().begin(), m.theta.values().end(), 0.0);
  Rng rng(21), replay(21);
  const double x1 = replay.normal();
  const double w = replay.normal();
  auto b = reverse_sample(m, 1, rng);
  EXPECT_NEAR(b.samples().item(), x1 / 0.9 + 0.3 * w, 1e-15);
}

TEST(ReverseSample, SeedDeterminism) {
  auto m = small_model(8, 2, 3, 5);
  Rng a(3), b(3);
  auto ta = reverse_sample(m, 4, a), tb = reverse_sample(m, 4, b);
  for (std::size_t t = 0; t <= 8; ++t) EXPECT_EQ(ta.states[t].values(), tb.states[t].values());
}

TEST(ReverseSample, TrajectoryShape) {
  auto m = small_model(8, 2, 3, 5);
  Rng rng(3);
  auto b = reverse_sample(m, 4, rng);
  auto p = b.path(2);
  EXPECT_EQ(p.states.size(), 9u);
  EXPECT_EQ(p.states[0].size(), 2u);
}

TEST(LogJoint, ZeroNoiseTrajectoryIsZero) {
  auto m = small_model(6, 2, 3, 8);
  Rng rng(3);
  auto b = reverse_sample(m, 3, rng);
  // Regenerate with zero draws on the fine-tuned steps.
  for (std::size_t t = m.fine_tuned_steps; t >= 1; --t) {
    b.states[t - 1] = step_mean(m, m.theta, b.states[t], t);
  }
  for (double v : log_joint_values(m, m.theta, b)) EXPECT_NEAR(v, 0.0, 1e-24);
}

TEST(LogJoint, OneStepHandValue) {
  Rng init(1);
  auto m = make_diffusion_model(schedule_from_alphas({0.81}, 0.5), 1, {4}, nc::Activation::tanh, 1,
                                init);
  std::fill(m.theta.values().begin(), m.theta.values().end(), 0.0);
  Trajectory p;
  const double x1 = 0.9;  // mean = x1 / 0.9 = 1
  p.states = {{1.0 + std::sqrt(0.1)}, {x1}};
  EXPECT_NEAR(log_joint(p, m), -0.2, 1e-12);
  p.states[0][0] = 1.0 + std::sqrt(0.2);
  EXPECT_LT(log_joint(p, m), -0.2);
}

TEST(PpoRatio, IdentityAtReference) {
  auto m = small_model(8, 3, 4, 2);
  Rng rng(6);
  auto b = reverse_sample(m, 10, rng);
  for (double r : ppo_ratio_values(m, m, b)) EXPECT_NEAR(r, 1.0, 1e-12);
  nc::Tape tape;
  auto rv = ppo_ratio(tape, m, m, b);
  for (double r : rv.value().values()) EXPECT_NEAR(r, 1.0, 1e-12);
}

TEST(PpoRatio, OneStepHandValue) {
  Rng init(1);
  auto m = make_diffusion_model(schedule_from_alphas({0.81}, 0.5), 1, {4}, nc::Activation::tanh, 1,
                                init);
  std::fill(m.theta.values().begin(), m.theta.values().end(), 0.0);
  auto ref = m;
  // s_theta shifts the mean; pick output biases so the squared gaps are 0.1 and 0.2.
  Trajectory p;
  p.states = {{1.0}, {0.9}};  // mu with zero denoiser = 1
  const double c = (1 - 0.81) / std::sqrt(1 - 0.81) / 0.9;  // d mu / d s
  m.theta.segment_values(m.theta.find("layer1.bias"))[0] = std::sqrt(0.1) / c;
  ref.theta.segment_values(ref.theta.find("layer1.bias"))[0] = std::sqrt(0.2) / c;
  EXPECT_NEAR(ppo_ratio(p, m, ref), std::exp(0.2), 1e-12);
  EXPECT_NEAR(std::exp(0.2), 1.2214, 1e-4);
}

TEST(PpoRatio, LogRatioIsLogJointDifference) {
  auto m = small_model(8, 2, 4, 2);
  auto ref = small_model(8, 2, 4, 3);
  Rng rng(6);
  auto b = reverse_sample(ref, 6, rng);
  auto r = ppo_ratio_values(m, ref, b);
  auto a = log_joint_values(m, m.theta, b), c = log_joint_values(ref, ref.theta, b);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(std::log(r[i]), a[i] - c[i], 1e-9);
}

TEST(PpoRatio, ScheduleMismatchThrows) {
  auto m = small_model(8, 2, 4, 2);
  auto ref = m;
  ref.schedule.sigma_samp = 0.2;
  Rng rng(6);
  auto b = reverse_sample(m, 2, rng);
  EXPECT_THROW(ppo_ratio_values(m, ref, b), ConfigError);
}

TEST(PpoRatio, GradientMatchesFiniteDifferences) {
  auto m = small_model(5, 2, 3, 2);
  auto ref = small_model(5, 2, 3, 9);
  Rng rng(6);
  auto b = reverse_sample(ref, 4, rng);
  nc::Tape tape;
  tape.backward(nc::sum(ppo_ratio(tape, m, ref, b)));
  auto analytic = m.theta.grad();
  auto numeric = testsupport::numeric_grad(m.theta.values(), [&] {
    double s = 0.0;
    for (double r : ppo_ratio_values(m, ref, b)) s += r;
    return s;
  });
  EXPECT_LE(testsupport::rel_error(analytic, numeric), 1e-4);
}

TEST(Ddpm, LearnsBimodalMixture) {
  Rng rng(2024);
  Tensor data = bimodal(2000, rng);
  auto m = make_diffusion_model(build_schedule(32, 1e-3, 0.3, 0.1), 1, {64, 64},
                                nc::Activation::relu, 8, rng);
  train_diffusion(m, data, {2000, 256, 3e-3, 0.02}, rng);
  auto samples = reverse_sample(m, 2000, rng).samples();
  EXPECT_LE(data::wasserstein1(samples, data), 0.15);
}

TEST(GenTraining, LinearDecayEndpoints) {
  GenTrainConfig cfg{11, 8, 0.5, 0.1};
  EXPECT_DOUBLE_EQ(detail::decayed_lr(cfg, 0), 0.5);
  EXPECT_NEAR(detail::decayed_lr(cfg, 10), 0.05, 1e-15);
  EXPECT_DOUBLE_EQ(detail::decayed_lr({11, 8, 0.5}, 10), 0.5);
}

// ---- VAE ----------------------------------------------------------------------

namespace {
VaeModel small_vae(std::uint64_t seed) {
  Rng rng(seed);
  return make_vae_model(3, 2, {5}, nc::Activation::tanh, 0.25, rng);
}
}  // namespace

TEST(Vae, ZeroEncoderHasZeroPriorKl) {
  auto m = small_vae(1);
  std::fill(m.phi.values().begin(), m.phi.values().end(), 0.0);
  Rng rng(2);
  nc::Tape tape;
  auto e = vae_elbo(tape, m, Tensor(4, 3, 1.0), rng);
  EXPECT_DOUBLE_EQ(e.prior_kl.item(), 0.0);
}

TEST(Vae, PerfectDecoderHasZeroRecon) {
  Rng rng(1);
  auto m = make_vae_model(2, 1, {3}, nc::Activation::tanh, 1.0, rng);
  std::fill(m.theta.values().begin(), m.theta.values().end(), 0.0);
  auto b = m.theta.segment_values(m.theta.find("layer1.bias"));
  b[0] = 0.4;
  b[1] = -0.6;
  nc::Tape tape;
  auto e = vae_elbo(tape, m, Tensor::from_rows({{0.4, -0.6}, {0.4, -0.6}}), rng);
  EXPECT_DOUBLE_EQ(e.recon.item(), 0.0);
}

TEST(Vae, ElboGradientMatchesFiniteDifferences) {
  auto m = small_vae(3);
  Rng data_rng(5);
  Tensor x = random_batch(4, 3, data_rng);
  auto value = [&] {
    Rng r(17);
    nc::Tape t;
    auto e = vae_elbo(t, m, x, r);
    return e.recon.item() + e.prior_kl.item();
  };
  Rng rng(17);
  nc::Tape tape;
  auto e = vae_elbo(tape, m, x, rng);
  tape.backward(nc::add(e.recon, e.prior_kl));
  auto g_phi = m.phi.grad(), g_theta = m.theta.grad();
  EXPECT_LE(testsupport::rel_error(g_phi, testsupport::numeric_grad(m.phi.values(), value)), 1e-4);
  EXPECT_LE(testsupport::rel_error(g_theta, testsupport::numeric_grad(m.theta.values(), value)),
            1e-4);
}

TEST(Vae, RatioHandValue) {
  Rng rng(1);
  auto m = make_vae_model(1, 1, {3}, nc::Activation::tanh, 0.5, rng);
  std::fill(m.theta.values().begin(), m.theta.values().end(), 0.0);
  auto old = m.theta;
  m.theta.segment_values(m.theta.find("layer1.bias"))[0] = 1.0 - std::sqrt(0.1);
  old.segment_values(old.find("layer1.bias"))[0] = 1.0 - std::sqrt(0.3);
  auto r = vae_ratio(Tensor::scalar(1.0), Tensor::scalar(0.0), m, old);
  EXPECT_NEAR(r[0], std::exp(0.2), 1e-12);
}

TEST(Vae, RatioIdentityAndReciprocal) {
  auto m = small_vae(4);
  auto other = small_vae(5);
  Rng rng(3);
  Tensor x = random_batch(5, 3, rng), z = random_batch(5, 2, rng);
  for (double r : vae_ratio(x, z, m, m.theta)) EXPECT_DOUBLE_EQ(r, 1.0);
  auto fwd = vae_ratio(x, z, m, other.theta);
  auto swapped = m;
  swapped.theta = other.theta;
  auto back = vae_ratio(x, z, swapped, m.theta);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(fwd[i] * back[i], 1.0, 1e-12);
}

TEST(Vae, LatentPerturbStaysInBall) {
  Rng rng(3);
  Tensor z = random_batch(200, 4, rng);
  EXPECT_EQ(latent_perturb(z, 0.0, rng).values(), z.values());
  Tensor p = latent_perturb(z, 0.25, rng);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < 4; ++j) n2 += (p(i, j) - z(i, j)) * (p(i, j) - z(i, j));
    EXPECT_LE(std::sqrt(n2), 0.25 + 1e-15);
  }
  Rng a(8), b(8);
  EXPECT_EQ(latent_perturb(z, 0.25, a).values(), latent_perturb(z, 0.25, b).values());
}
