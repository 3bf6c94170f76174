#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/autograd.hpp"
#include "gasdro/numcore/params.hpp"
#include "gasdro/numcore/rng.hpp"

namespace gasdro::nc {

enum class Activation { tanh, relu, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation: " + s);
}

/// Fully connected network. `widths` lists input, hidden..., output sizes.
/// Hidden layers use `hidden`; the output layer is always linear.
struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation hidden = Activation::tanh;

  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t layers() const { return widths.size() - 1; }

  void validate() const {
    if (widths.size() < 2) throw ConfigError("MlpSpec: need input and output widths");
    for (auto w : widths)
      if (w == 0) throw ConfigError("MlpSpec: widths must be positive");
  }
};

// Segments are laid out as layer<i>.weight [in, out] then layer<i>.bias [1, out].
inline ParamVector init_mlp_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector p;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    auto w = p.add_segment("layer" + std::to_string(l) + ".weight", in, out);
    p.add_segment("layer" + std::to_string(l) + ".bias", 1, out);
    // Glorot-uniform.
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : p.segment_values(w)) v = rng.uniform(-limit, limit);
  }
  return p;
}

inline void check_mlp_layout(const MlpSpec& spec, const ParamVector& p) {
  spec.validate();
  if (p.segments().size() != 2 * spec.layers())
    throw ShapeError("mlp: parameter layout does not match spec");
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const auto& w = p.segment(2 * l);
    const auto& b = p.segment(2 * l + 1);
    if (w.rows != spec.widths[l] || w.cols != spec.widths[l + 1] || b.cols != spec.widths[l + 1])
      throw ShapeError("mlp: layer " + std::to_string(l) + " shape does not match spec");
  }
}

namespace detail {
inline Var activate(Var v, Activation a) {
  switch (a) {
    case Activation::tanh: return tanh(v);
    case Activation::relu: return relu(v);
    case Activation::identity: return v;
  }
  return v;
}
}  // namespace detail

/// Records the forward pass on `tape`; gradients flow into `params` on backward.
inline Var mlp_forward(Tape& tape, const MlpSpec& spec, ParamVector& params, Var input) {
  check_mlp_layout(spec, params);
  if (input.cols() != spec.input_width())
    throw ShapeError("mlp_forward: input width " + std::to_string(input.cols()) +
                     " != " + std::to_string(spec.input_width()));
  Var h = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    Var w = tape.parameter(params, 2 * l);
    Var b = tape.parameter(params, 2 * l + 1);
    h = add_row(matmul(h, w), b);
    if (l + 1 < spec.layers()) h = detail::activate(h, spec.hidden);
  }
  return h;
}

// Same computation without recording; used for sampling and evaluation.
inline Tensor mlp_eval(const MlpSpec& spec, const ParamVector& params, const Tensor& input) {
  check_mlp_layout(spec, params);
  if (input.cols() != spec.input_width()) throw ShapeError("mlp_eval: input width mismatch");
  Tensor h = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    auto w = params.segment_values(2 * l);
    auto b = params.segment_values(2 * l + 1);
    Tensor next(h.rows(), out);
    for (std::size_t i = 0; i < h.rows(); ++i) {
      double* o = &next(i, 0);
      for (std::size_t j = 0; j < out; ++j) o[j] = b[j];
      for (std::size_t p = 0; p < in; ++p) {
        const double x = h(i, p);
        const double* wr = &w[p * out];
        for (std::size_t j = 0; j < out; ++j) o[j] += x * wr[j];
      }
      if (l + 1 < spec.layers()) {
        for (std::size_t j = 0; j < out; ++j) {
          switch (spec.hidden) {
            case Activation::tanh: o[j] = std::tanh(o[j]); break;
            case Activation::relu: o[j] = o[j] > 0.0 ? o[j] : 0.0; break;
            case Activation::identity: break;
          }
        }
      }
    }
    h = std::move(next);
  }
  if (!h.all_finite()) throw NumericError("mlp_eval: non-finite output");
  return h;
}

}  // namespace gasdro::nc
