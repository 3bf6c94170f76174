#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gasdro/error.hpp"

namespace gasdro::nc {

/// Dense row-major tensor of rank 1..3.
///
/// Operations treat a tensor as a matrix whose column count is the last
/// dimension and whose row count is the product of the leading dimensions, so
/// a rank-1 tensor of length n is a single row.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, values_(rows * cols, fill) {
    validate();
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    validate();
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t n_rows = rows.size();
    std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
    std::vector<double> values;
    values.reserve(n_rows * n_cols);
    for (const auto& r : rows) {
      if (r.size() != n_cols) throw ShapeError("Tensor::from_rows: ragged rows");
      values.insert(values.end(), r.begin(), r.end());
    }
    return Tensor({n_rows, n_cols}, std::move(values));
  }

  static Tensor column(std::vector<double> values) {
    auto n = values.size();
    return Tensor({n, 1}, std::move(values));
  }

  static Tensor row(std::vector<double> values) {
    auto n = values.size();
    return Tensor({1, n}, std::move(values));
  }

  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : values_.size() / cols(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> row_span(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row_span(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool has_grad() const { return grad_.has_value(); }
  const std::vector<double>& grad() const { return grad_.value(); }
  void set_grad(std::vector<double> g) {
    if (g.size() != values_.size()) throw ShapeError("Tensor::set_grad: size mismatch");
    grad_ = std::move(g);
  }
  void clear_grad() { grad_.reset(); }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double item() const {
    if (values_.size() != 1) throw ShapeError("Tensor::item: tensor is not a scalar");
    return values_[0];
  }

  // Rows [begin, end) as a new tensor.
  Tensor slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows()) throw ShapeError("Tensor::slice_rows: out of range");
    std::vector<double> v(values_.begin() + static_cast<std::ptrdiff_t>(begin * cols()),
                          values_.begin() + static_cast<std::ptrdiff_t>(end * cols()));
    return Tensor({end - begin, cols()}, std::move(v));
  }

  Tensor gather_rows(std::span<const std::size_t> idx) const {
    Tensor out(idx.size(), cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = row_span(idx[i]);
      std::copy(src.begin(), src.end(), out.row_span(i).begin());
    }
    return out;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ']';
    return os.str();
  }

 private:
  void validate() const {
    if (shape_.empty() || shape_.size() > 3)
      throw ShapeError("Tensor: rank must be 1..3");
    std::size_t n = 1;
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("Tensor: dimensions must be positive");
      n *= d;
    }
    if (n != values_.size()) throw ShapeError("Tensor: values length does not match shape");
  }

  std::vector<std::size_t> shape_{};
  std::vector<double> values_{};
  std::optional<std::vector<double>> grad_{};
};

// Stacks equal-width rows into one tensor.
inline Tensor vstack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("vstack: no parts");
  std::size_t cols = parts.front().cols();
  std::vector<double> v;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("vstack: column mismatch");
    v.insert(v.end(), p.values().begin(), p.values().end());
  }
  std::size_t rows = v.size() / cols;
  return Tensor({rows, cols}, std::move(v));
}

}  // namespace gasdro::nc
