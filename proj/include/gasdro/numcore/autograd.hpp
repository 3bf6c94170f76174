#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/params.hpp"
#include "gasdro/numcore/tensor.hpp"

namespace gasdro::nc {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }
};

/// Reverse-mode tape. A fresh tape is recorded for every forward pass; nodes
/// are appended in evaluation order, so reverse index order is a valid
/// topological order for backward.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t) { return push(std::move(t), false, {}, "constant"); }

  // Differentiable input; its gradient is readable through grad() after backward.
  Var leaf(Tensor t) { return push(std::move(t), true, {}, "leaf"); }

  // Binds a ParamVector segment. backward() adds into the segment's grad slot.
  Var parameter(ParamVector& p, std::size_t segment) {
    Var v = push(p.segment_tensor(segment), true, {}, "parameter");
    bindings_.push_back({v.id, &p, segment});
    return v;
  }

  Var record(Tensor value, bool needs_grad, Backprop backprop, const char* op) {
    return push(std::move(value), needs_grad, std::move(backprop), op);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  // Gradient slot of node `id`; allocated lazily during backward.
  std::vector<double>& grad_slot(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  const std::vector<double>& grad(Var v) const {
    if (!backward_done_) throw NumericError("Tape::grad: backward has not run");
    const auto& n = nodes_.at(v.id);
    if (n.grad.empty()) {
      static thread_local std::vector<double> zeros;
      zeros.assign(n.value.size(), 0.0);
      return zeros;
    }
    return n.grad;
  }

  void backward(Var loss) {
    if (loss.tape != this) throw NumericError("Tape::backward: variable belongs to another tape");
    if (backward_done_) throw NumericError("Tape::backward: called twice on the same recording");
    if (nodes_.at(loss.id).value.size() != 1)
      throw ShapeError("Tape::backward: loss must be a scalar");
    backward_done_ = true;
    grad_slot(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty() || !n.backprop) continue;
      n.backprop(*this, i);
    }
    for (const auto& b : bindings_) {
      if (b.node > loss.id) continue;
      const auto& g = nodes_[b.node].grad;
      if (g.empty()) continue;
      auto dst = b.params->segment_grad(b.segment);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool needs_grad = false;
    Backprop backprop;
    std::vector<double> grad;
  };
  struct Binding {
    std::size_t node;
    ParamVector* params;
    std::size_t segment;
  };

  Var push(Tensor t, bool needs_grad, Backprop bp, const char* op) {
    if (backward_done_) throw NumericError("Tape: recording after backward");
    if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
    nodes_.push_back({std::move(t), needs_grad, std::move(bp), {}});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::vector<Binding> bindings_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw NumericError(std::string(op) + ": operands from different tapes");
  return *a.tape;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
}

// Elementwise unary op given f(x) and f'(x, y).
template <class F, class D>
Var unary(Var a, F f, D df, const char* op) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out({av.rows(), av.cols()}, std::vector<double>(av.size()));
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  std::size_t ia = a.id;
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, df](Tape& tp, std::size_t self) {
                    const auto& x = tp.value(Var{&tp, ia});
                    const auto& y = tp.value(Var{&tp, self});
                    const auto& g = tp.grad_slot(self);
                    auto& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
                  },
                  op);
}

}  // namespace detail

// ---- arithmetic -----------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "add");
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  std::size_t ia = a.id, ib = b.id;
  bool na = t.needs_grad(a), nb = t.needs_grad(b);
  return t.record(std::move(out), na || nb,
                  [ia, ib, na, nb](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    if (na) {
                      auto& ga = tp.grad_slot(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    }
                    if (nb) {
                      auto& gb = tp.grad_slot(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                    }
                  },
                  "add");
}

inline Var scale(Var a, double c) {
  return detail::unary(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; }, "scale");
}

inline Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

inline Var add_scalar(Var a, double c) {
  return detail::unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; }, "add_scalar");
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "mul");
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  std::size_t ia = a.id, ib = b.id;
  bool na = t.needs_grad(a), nb = t.needs_grad(b);
  return t.record(std::move(out), na || nb,
                  [ia, ib, na, nb](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    const auto& av = tp.value(Var{&tp, ia});
                    const auto& bv = tp.value(Var{&tp, ib});
                    if (na) {
                      auto& ga = tp.grad_slot(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                    }
                    if (nb) {
                      auto& gb = tp.grad_slot(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                    }
                  },
                  "mul");
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator-(Var a) { return scale(a, -1.0); }

// ---- elementwise nonlinearities ------------------------------------------

inline Var square(Var a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

inline Var tanh(Var a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Var relu(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline Var exp(Var a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

// Clamp to [lo, hi]; zero gradient outside the interval.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; }, "clamp");
}

// Elementwise minimum; ties route the gradient to `a`.
inline Var minimum(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "minimum");
  detail::require_same_shape(a.value(), b.value(), "minimum");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], b.value()[i]);
  std::size_t ia = a.id, ib = b.id;
  bool na = t.needs_grad(a), nb = t.needs_grad(b);
  return t.record(std::move(out), na || nb,
                  [ia, ib, na, nb](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    const auto& av = tp.value(Var{&tp, ia});
                    const auto& bv = tp.value(Var{&tp, ib});
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      bool take_a = av[i] <= bv[i];
                      if (take_a && na) tp.grad_slot(ia)[i] += g[i];
                      if (!take_a && nb) tp.grad_slot(ib)[i] += g[i];
                    }
                  },
                  "minimum");
}

// ---- linear algebra -------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows())
    throw ShapeError("matmul: inner dimensions differ " + av.shape_string() + " x " +
                     bv.shape_string());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* o = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av(i, p);
      if (aip == 0.0) continue;
      const double* br = bv.values().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += aip * br[j];
    }
  }
  std::size_t ia = a.id, ib = b.id;
  bool na = t.needs_grad(a), nb = t.needs_grad(b);
  return t.record(std::move(out), na || nb,
                  [ia, ib, na, nb, m, k, n](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    const auto& A = tp.value(Var{&tp, ia});
                    const auto& B = tp.value(Var{&tp, ib});
                    if (na) {
                      auto& ga = tp.grad_slot(ia);  // dA = G B^T, row axpys against B^T
                      std::vector<double> bt(n * k);
                      for (std::size_t p = 0; p < k; ++p)
                        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B(p, j);
                      for (std::size_t i = 0; i < m; ++i) {
                        double* dst = &ga[i * k];
                        for (std::size_t j = 0; j < n; ++j) {
                          const double gij = g[i * n + j];
                          if (gij == 0.0) continue;
                          const double* src = &bt[j * k];
                          for (std::size_t p = 0; p < k; ++p) dst[p] += gij * src[p];
                        }
                      }
                    }
                    if (nb) {
                      auto& gb = tp.grad_slot(ib);  // dB = A^T G
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = A(i, p);
                          if (aip == 0.0) continue;
                          const double* gr = &g[i * n];
                          double* dst = &gb[p * n];
                          for (std::size_t j = 0; j < n; ++j) dst[j] += aip * gr[j];
                        }
                    }
                  },
                  "matmul");
}

// a[m,n] + bias[1,n] broadcast over rows.
inline Var add_row(Var a, Var bias) {
  Tape& t = detail::same_tape(a, bias, "add_row");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw ShapeError("add_row: bias shape mismatch");
  Tensor out = av;
  const std::size_t m = av.rows(), n = av.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += bv[j];
  std::size_t ia = a.id, ib = bias.id;
  bool na = t.needs_grad(a), nb = t.needs_grad(bias);
  return t.record(std::move(out), na || nb,
                  [ia, ib, na, nb, m, n](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    if (na) {
                      auto& ga = tp.grad_slot(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    }
                    if (nb) {
                      auto& gb = tp.grad_slot(ib);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                    }
                  },
                  "add_row");
}

// a[m,n] * c[m,1] broadcast over columns.
inline Var mul_col(Var a, Var c) {
  Tape& t = detail::same_tape(a, c, "mul_col");
  const Tensor& av = a.value();
  const Tensor& cv = c.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) throw ShapeError("mul_col: shape mismatch");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= cv[i];
  std::size_t ia = a.id, ic = c.id;
  bool na = t.needs_grad(a), nc = t.needs_grad(c);
  return t.record(std::move(out), na || nc,
                  [ia, ic, na, nc, m, n](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    const auto& A = tp.value(Var{&tp, ia});
                    const auto& C = tp.value(Var{&tp, ic});
                    if (na) {
                      auto& ga = tp.grad_slot(ia);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * C[i];
                    }
                    if (nc) {
                      auto& gc = tp.grad_slot(ic);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gc[i] += g[i * n + j] * A(i, j);
                    }
                  },
                  "mul_col");
}

// ---- reductions and reshaping --------------------------------------------

inline Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  std::size_t ia = a.id;
  return t.record(Tensor::scalar(s), t.needs_grad(a),
                  [ia](Tape& tp, std::size_t self) {
                    const double g = tp.grad_slot(self)[0];
                    for (auto& x : tp.grad_slot(ia)) x += g;
                  },
                  "sum");
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// Row sums: [m,n] -> [m,1].
inline Var row_sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out(m, 1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av(i, j);
  std::size_t ia = a.id;
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, m, n](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    auto& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
                  },
                  "row_sum");
}

// Columns [begin, end).
inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (begin >= end || end > av.cols()) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t m = av.rows(), n = av.cols(), w = end - begin;
  Tensor out(m, w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = av(i, begin + j);
  std::size_t ia = a.id;
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, m, n, w, begin](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    auto& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += g[i * w + j];
                  },
                  "slice_cols");
}

inline Var concat_cols(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row count mismatch");
  const std::size_t m = av.rows(), na_ = av.cols(), nb_ = bv.cols(), n = na_ + nb_;
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < na_; ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < nb_; ++j) out(i, na_ + j) = bv(i, j);
  }
  std::size_t ia = a.id, ib = b.id;
  bool ga_needed = t.needs_grad(a), gb_needed = t.needs_grad(b);
  return t.record(std::move(out), ga_needed || gb_needed,
                  [=](Tape& tp, std::size_t self) {
                    const auto& g = tp.grad_slot(self);
                    if (ga_needed) {
                      auto& ga = tp.grad_slot(ia);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < na_; ++j) ga[i * na_ + j] += g[i * n + j];
                    }
                    if (gb_needed) {
                      auto& gb = tp.grad_slot(ib);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < nb_; ++j)
                          gb[i * nb_ + j] += g[i * n + na_ + j];
                    }
                  },
                  "concat_cols");
}

/// alpha * log( mean_i exp(a_i / alpha) ) over all entries, computed with the
/// max-shift so that tiny alpha stays finite. The gradient is the softmax
/// weight vector of a/alpha; alpha is a constant.
inline Var scaled_log_mean_exp(Var a, double alpha) {
  if (!(alpha > 0.0)) throw NumericError("scaled_log_mean_exp: alpha must be positive");
  Tape& t = *a.tape;
  const auto& v = a.value().values();
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> w(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = std::exp((v[i] - mx) / alpha);
    z += w[i];
  }
  for (auto& x : w) x /= z;
  const double val = mx + alpha * std::log(z / static_cast<double>(v.size()));
  std::size_t ia = a.id;
  return t.record(Tensor::scalar(val), t.needs_grad(a),
                  [ia, w = std::move(w)](Tape& tp, std::size_t self) {
                    const double g = tp.grad_slot(self)[0];
                    auto& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
                  },
                  "scaled_log_mean_exp");
}

}  // namespace gasdro::nc
