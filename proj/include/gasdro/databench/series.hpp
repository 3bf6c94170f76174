#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "gasdro/error.hpp"
#include "gasdro/numcore/rng.hpp"

namespace gasdro::data {

/// One family of synthetic series. Families differ by level, seasonal shape,
/// trend and regime offsets, and play the role of a region or a year.
struct ShiftFamilyConfig {
  std::string id = "base";
  double level = 0.0;
  std::vector<double> frequencies{1.0 / 24.0};  // cycles per step
  std::vector<double> amplitudes{1.0};
  double trend = 0.0;                           // per step
  std::vector<double> regime_offsets;           // cycled every regime_length steps
  std::size_t regime_length = 96;
  double noise_std = 0.1;
  bool random_phase = true;

  void validate() const {
    if (frequencies.empty()) throw ConfigError("family " + id + ": need at least one frequency");
    if (frequencies.size() != amplitudes.size())
      throw ConfigError("family " + id + ": frequencies and amplitudes differ in length");
    for (double a : amplitudes)
      if (!(a >= 0.0)) throw ConfigError("family " + id + ": amplitudes must be non-negative");
    if (!(noise_std >= 0.0)) throw ConfigError("family " + id + ": noise_std must be >= 0");
    if (!regime_offsets.empty() && regime_length == 0)
      throw ConfigError("family " + id + ": regime_length must be positive");
  }
};

/// level + sum_k a_k sin(2 pi f_k t + phase_k) + trend t + regime offset + noise.
/// Phases are drawn first (one uniform per component when random_phase), then
/// one normal per step.
inline std::vector<double> synth_series(const ShiftFamilyConfig& cfg, std::size_t length,
                                        nc::Rng& rng) {
  cfg.validate();
  std::vector<double> phase(cfg.frequencies.size(), 0.0);
  if (cfg.random_phase)
    for (auto& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> out(length);
  for (std::size_t t = 0; t < length; ++t) {
    double v = cfg.level + cfg.trend * static_cast<double>(t);
    for (std::size_t k = 0; k < cfg.frequencies.size(); ++k)
      v += cfg.amplitudes[k] *
           std::sin(2.0 * std::numbers::pi * cfg.frequencies[k] * static_cast<double>(t) + phase[k]);
    if (!cfg.regime_offsets.empty())
      v += cfg.regime_offsets[(t / cfg.regime_length) % cfg.regime_offsets.size()];
    v += cfg.noise_std * rng.normal();
    out[t] = v;
  }
  return out;
}

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}
}  // namespace detail

/// Reads `timestamp,value` rows. A first line whose value field is not numeric
/// is taken as a header. Blank lines are skipped.
inline std::vector<double> ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("ingest_csv: cannot open " + path);
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const bool first = !seen_content;
    seen_content = true;
    const auto comma = t.find(',');
    if (comma == std::string::npos) {
      if (first) continue;
      throw IoError(path + ":" + std::to_string(lineno) + ": expected two columns");
    }
    const std::string field = detail::trim(t.substr(comma + 1));
    if (field.find(',') != std::string::npos)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected two columns");
    double v = 0.0;
    if (!detail::parse_double(field, v)) {
      if (first) continue;  // header
      throw IoError(path + ":" + std::to_string(lineno) + ": non-numeric value '" + field + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw IoError("ingest_csv: no data rows in " + path);
  return out;
}

/// Writes `index,value` rows with a header, at full precision.
inline void write_series_csv(const std::string& path, const std::vector<double>& series) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "timestamp,value\n";
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", series[i]);
    out << i << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace gasdro::data
