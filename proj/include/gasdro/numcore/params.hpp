#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/tensor.hpp"

namespace gasdro::nc {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

/// Flat trainable parameter store. Named segments partition `values`; `grad`
/// has the same layout and accumulates until an optimizer step zeroes it.
class ParamVector {
 public:
  std::size_t add_segment(std::string name, std::size_t rows, std::size_t cols,
                          double fill = 0.0) {
    if (rows == 0 || cols == 0) throw ShapeError("ParamVector: empty segment " + name);
    segments_.push_back({std::move(name), values_.size(), rows, cols});
    values_.resize(values_.size() + rows * cols, fill);
    grad_.resize(values_.size(), 0.0);
    return segments_.size() - 1;
  }

  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(std::size_t i) const { return segments_.at(i); }
  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < segments_.size(); ++i)
      if (segments_[i].name == name) return i;
    throw ConfigError("ParamVector: no segment named " + name);
  }

  std::size_t size() const { return values_.size(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& grad() { return grad_; }
  const std::vector<double>& grad() const { return grad_; }

  std::span<double> segment_values(std::size_t i) {
    const auto& s = segments_.at(i);
    return {values_.data() + s.offset, s.size()};
  }
  std::span<const double> segment_values(std::size_t i) const {
    const auto& s = segments_.at(i);
    return {values_.data() + s.offset, s.size()};
  }
  std::span<double> segment_grad(std::size_t i) {
    const auto& s = segments_.at(i);
    return {grad_.data() + s.offset, s.size()};
  }

  Tensor segment_tensor(std::size_t i) const {
    const auto& s = segments_.at(i);
    auto v = segment_values(i);
    return Tensor({s.rows, s.cols}, std::vector<double>(v.begin(), v.end()));
  }

  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

  bool same_layout(const ParamVector& other) const {
    if (segments_.size() != other.segments_.size()) return false;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& a = segments_[i];
      const auto& b = other.segments_[i];
      if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
  }

 private:
  std::vector<Segment> segments_;
  std::vector<double> values_;
  std::vector<double> grad_;
};

// Parameter checkpoint format, version 1 (plain text):
//
//   gasdro-params 1
//   segments <count>
//   <name> <rows> <cols>          one line per segment, in layout order
//   values <total>
//   <value>                       one per line, %.17g (round-trips exactly)
//
inline constexpr int kParamFormatVersion = 1;

inline void write_params(std::ostream& os, const ParamVector& p) {
  os << "gasdro-params " << kParamFormatVersion << '\n';
  os << "segments " << p.segments().size() << '\n';
  for (const auto& s : p.segments()) os << s.name << ' ' << s.rows << ' ' << s.cols << '\n';
  os << "values " << p.size() << '\n';
  char buf[40];
  for (double v : p.values()) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    os << buf;
  }
}

inline ParamVector read_params(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "gasdro-params")
    throw IoError("read_params: missing gasdro-params header");
  if (version != kParamFormatVersion)
    throw IoError("read_params: unsupported version " + std::to_string(version));
  std::size_t count = 0;
  if (!(is >> tag >> count) || tag != "segments") throw IoError("read_params: bad segments line");
  ParamVector p;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(is >> name >> rows >> cols)) throw IoError("read_params: bad segment entry");
    p.add_segment(name, rows, cols);
  }
  std::size_t total = 0;
  if (!(is >> tag >> total) || tag != "values" || total != p.size())
    throw IoError("read_params: value count does not match segments");
  for (auto& v : p.values()) {
    std::string tok;
    if (!(is >> tok)) throw IoError("read_params: truncated values");
    v = std::stod(tok);
  }
  return p;
}

}  // namespace gasdro::nc
