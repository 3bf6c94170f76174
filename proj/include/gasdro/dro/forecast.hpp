#pragma once

#include <concepts>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/autograd.hpp"
#include "gasdro/numcore/mlp.hpp"

namespace gasdro::dro {

using nc::Tape;
using nc::Tensor;
using nc::Var;

/// Anything the outer player minimizes: per-sample values f(w, x) without
/// recording, and a recorded mean over rows whose gradient lands in params().
template <class F>
concept LossFn = requires(F& f, const F& cf, Tape& tape, const Tensor& x) {
  { cf.per_sample(x) } -> std::convertible_to<std::vector<double>>;
  { f.record(tape, x) } -> std::same_as<Var>;
  { f.params() } -> std::same_as<nc::ParamVector&>;
};

/// MLP forecaster: first `input_len` entries of a window -> last `output_len`.
struct Predictor {
  nc::MlpSpec spec;
  nc::ParamVector w;
  std::size_t input_len = 0;
  std::size_t output_len = 0;

  std::size_t window_len() const { return input_len + output_len; }
};

inline Predictor make_predictor(std::size_t input_len, std::size_t output_len,
                                const std::vector<std::size_t>& hidden, nc::Activation act,
                                nc::Rng& rng) {
  Predictor p;
  p.input_len = input_len;
  p.output_len = output_len;
  p.spec.widths.push_back(input_len);
  for (auto h : hidden) p.spec.widths.push_back(h);
  p.spec.widths.push_back(output_len);
  p.spec.hidden = act;
  p.w = nc::init_mlp_params(p.spec, rng);
  return p;
}

namespace detail {
inline void check_window(const Predictor& p, std::size_t cols) {
  if (cols != p.window_len())
    throw ShapeError("forecast_loss: window length " + std::to_string(cols) + " != " +
                     std::to_string(p.window_len()));
}
}  // namespace detail

/// Mean squared forecast error over the batch and horizon. `windows` may be a
/// leaf (for input-space adversaries) or a constant.
inline Var forecast_loss(Tape& tape, Predictor& p, Var windows) {
  detail::check_window(p, windows.cols());
  Var inputs = nc::slice_cols(windows, 0, p.input_len);
  Var targets = nc::slice_cols(windows, p.input_len, p.window_len());
  Var pred = nc::mlp_forward(tape, p.spec, p.w, inputs);
  return nc::mean(nc::square(nc::sub(pred, targets)));
}

// Per-window MSE as a recorded [n, 1] column.
inline Var forecast_loss_rows(Tape& tape, Predictor& p, Var windows) {
  detail::check_window(p, windows.cols());
  Var inputs = nc::slice_cols(windows, 0, p.input_len);
  Var targets = nc::slice_cols(windows, p.input_len, p.window_len());
  Var pred = nc::mlp_forward(tape, p.spec, p.w, inputs);
  return nc::scale(nc::row_sum(nc::square(nc::sub(pred, targets))),
                   1.0 / static_cast<double>(p.output_len));
}

inline Tensor forecast(const Predictor& p, const Tensor& windows) {
  detail::check_window(p, windows.cols());
  Tensor in(windows.rows(), p.input_len);
  for (std::size_t i = 0; i < windows.rows(); ++i)
    for (std::size_t j = 0; j < p.input_len; ++j) in(i, j) = windows(i, j);
  return nc::mlp_eval(p.spec, p.w, in);
}

// Per-window MSE over the horizon.
inline std::vector<double> forecast_losses(const Predictor& p, const Tensor& windows) {
  Tensor pred = forecast(p, windows);
  std::vector<double> out(windows.rows(), 0.0);
  for (std::size_t i = 0; i < windows.rows(); ++i) {
    for (std::size_t j = 0; j < p.output_len; ++j) {
      const double e = pred(i, j) - windows(i, p.input_len + j);
      out[i] += e * e;
    }
    out[i] /= static_cast<double>(p.output_len);
  }
  return out;
}

struct ForecastLoss {
  Predictor* predictor;

  std::vector<double> per_sample(const Tensor& x) const { return forecast_losses(*predictor, x); }
  Var record(Tape& tape, const Tensor& x) {
    return forecast_loss(tape, *predictor, tape.constant(x));
  }
  nc::ParamVector& params() { return predictor->w; }
};

}  // namespace gasdro::dro
