#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

#include "gasdro/dro/forecast.hpp"
#include "gasdro/genmodels/diffusion.hpp"
#include "gasdro/numcore/adam.hpp"

namespace gasdro::base {

using dro::Predictor;
using nc::Tape;
using nc::Tensor;
using nc::Var;

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch = 64;
  double lr = 1e-3;
};

// Recorded minibatch objective for one step.
using BatchObjective = std::function<Var(Tape&, Predictor&, const Tensor&)>;

/// Shuffled minibatch epochs with Adam on w. Returns the per-epoch objective,
/// batch values weighted by batch size. The only randomness is the
/// per-epoch permutation.
inline std::vector<double> train_loop(Predictor& p, const Tensor& data, const TrainConfig& cfg,
                                      nc::Rng& rng, const BatchObjective& objective) {
  if (cfg.epochs > 0 && (data.empty() || data.rows() == 0))
    throw ConfigError("train: empty training set");
  if (cfg.batch == 0) throw ConfigError("train: batch must be at least 1");
  nc::AdamState opt(cfg.lr);
  std::vector<double> history;
  std::vector<std::size_t> order(data.empty() ? 0 : data.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      Tape tape;
      Var loss = objective(tape, p, data.gather_rows(idx));
      tape.backward(loss);
      nc::adam_step(opt, p.w);
      total += loss.item() * static_cast<double>(idx.size());
    }
    history.push_back(total / static_cast<double>(order.size()));
  }
  return history;
}

inline std::vector<double> train_erm(Predictor& p, const Tensor& data, const TrainConfig& cfg,
                                     nc::Rng& rng) {
  return train_loop(p, data, cfg, rng, [](Tape& tape, Predictor& pr, const Tensor& b) {
    return dro::forecast_loss(tape, pr, tape.constant(b));
  });
}

// Stream id used to draw DML augmentation, kept apart from the shuffling stream.
inline constexpr std::uint64_t kAugmentStream = 0xA06;

/// Samples used by DML. Drawn from a stream derived from the run seed, so the
/// main stream is untouched and repeated calls return the same set.
inline Tensor dml_augmentation(const gen::DiffusionModel& g, std::size_t augment_n,
                               const nc::Rng& rng) {
  nc::Rng aug = rng.derive(kAugmentStream);
  return gen::reverse_sample(g, augment_n, aug).samples();
}

/// ERM on the nominal set plus `augment_n` generated windows.
inline std::vector<double> train_dml(Predictor& p, const Tensor& data,
                                     const gen::DiffusionModel& g, long long augment_n,
                                     const TrainConfig& cfg, nc::Rng& rng) {
  if (augment_n < 0) throw ConfigError("train_dml: augment_n must be non-negative");
  if (augment_n == 0) return train_erm(p, data, cfg, rng);
  if (g.data_dim != data.cols()) throw ShapeError("train_dml: generator width != window length");
  Tensor all = nc::vstack({data, dml_augmentation(g, static_cast<std::size_t>(augment_n), rng)});
  return train_erm(p, all, cfg, rng);
}

}  // namespace gasdro::base
