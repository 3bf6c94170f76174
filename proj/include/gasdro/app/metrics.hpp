#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gasdro/databench/series.hpp"
#include "gasdro/error.hpp"

namespace gasdro::app {

// One evaluation cell. Serialized as a single line of space separated
// key=value pairs; values never contain spaces.
struct MetricsRecord {
  std::string run;         // <method>-s<seed>
  std::string method;
  std::string dataset;
  std::string corruption = "clean";  // clean | <kind>@<level>
  double mse = 0.0;
  double shift_w1 = 0.0;   // train windows vs clean test windows
  std::size_t windows = 0;

  std::string line() const {
    char buf[64];
    std::string s = "run=" + run + " method=" + method + " dataset=" + dataset +
                    " corruption=" + corruption;
    std::snprintf(buf, sizeof buf, " mse=%.10g", mse);
    s += buf;
    std::snprintf(buf, sizeof buf, " w1=%.10g", shift_w1);
    s += buf;
    s += " windows=" + std::to_string(windows);
    return s;
  }

  static MetricsRecord parse(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string tok;
    while (ss >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw IoError("metrics: malformed field '" + tok + "'");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto need = [&](const char* k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw IoError(std::string("metrics: missing field ") + k);
      return it->second;
    };
    MetricsRecord r;
    r.run = need("run");
    r.method = need("method");
    r.dataset = need("dataset");
    r.corruption = need("corruption");
    if (!data::detail::parse_double(need("mse"), r.mse) || !data::detail::parse_double(need("w1"), r.shift_w1))
      throw IoError("metrics: bad number in '" + text + "'");
    r.windows = static_cast<std::size_t>(std::stoull(need("windows")));
    if (r.mse < 0.0 || r.shift_w1 < 0.0) throw IoError("metrics: negative mse or w1");
    return r;
  }
};

inline void write_metrics(const std::string& path, const std::vector<MetricsRecord>& recs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : recs) out << r.line() << '\n';
}

inline std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!data::detail::trim(line).empty()) out.push_back(MetricsRecord::parse(line));
  return out;
}

// ---- summary tables ---------------------------------------------------------

/// Rows are datasets, columns methods, for one corruption cell. Methods keep
/// their first-seen order, with erm moved to the front when present.
struct SummaryTable {
  std::string corruption;
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  std::vector<std::vector<double>> mse;  // [dataset][method]

  double average(std::size_t m) const {
    double s = 0.0;
    for (const auto& row : mse) s += row[m];
    return s / static_cast<double>(mse.size());
  }
  double worst(std::size_t m) const {
    double w = mse.front()[m];
    for (const auto& row : mse) w = std::max(w, row[m]);
    return w;
  }
  // Percentage reduction of the column's Average against erm's.
  double improvement(std::size_t m) const {
    auto it = std::find(methods.begin(), methods.end(), "erm");
    if (it == methods.end()) return 0.0;
    const double base = average(static_cast<std::size_t>(it - methods.begin()));
    return base > 0.0 ? 100.0 * (base - average(m)) / base : 0.0;
  }

  std::string csv() const {
    char buf[64];
    std::string s = "dataset";
    for (const auto& m : methods) s += "," + m;
    s += '\n';
    auto row = [&](const std::string& name, auto value) {
      s += name;
      for (std::size_t m = 0; m < methods.size(); ++m) {
        std::snprintf(buf, sizeof buf, ",%.6f", value(m));
        s += buf;
      }
      s += '\n';
    };
    for (std::size_t d = 0; d < datasets.size(); ++d)
      row(datasets[d], [&](std::size_t m) { return mse[d][m]; });
    row("Average", [&](std::size_t m) { return average(m); });
    row("Worst", [&](std::size_t m) { return worst(m); });
    if (std::find(methods.begin(), methods.end(), "erm") != methods.end())
      row("Improvement%", [&](std::size_t m) { return improvement(m); });
    return s;
  }
};

inline std::vector<SummaryTable> summarize(const std::vector<MetricsRecord>& recs) {
  if (recs.empty()) throw IoError("report: no metrics records");
  std::vector<std::string> cells, methods, datasets;
  auto add = [](std::vector<std::string>& v, const std::string& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const auto& r : recs) {
    add(cells, r.corruption);
    add(methods, r.method);
    add(datasets, r.dataset);
  }
  if (auto it = std::find(methods.begin(), methods.end(), "erm"); it != methods.end())
    std::rotate(methods.begin(), it, it + 1);
  std::vector<SummaryTable> out;
  for (const auto& cell : cells) {
    SummaryTable t;
    t.corruption = cell;
    t.methods = methods;
    t.datasets = datasets;
    t.mse.assign(datasets.size(), std::vector<double>(methods.size(), 0.0));
    std::vector<std::vector<int>> seen(datasets.size(), std::vector<int>(methods.size(), 0));
    for (const auto& r : recs) {
      if (r.corruption != cell) continue;
      auto d = std::find(datasets.begin(), datasets.end(), r.dataset) - datasets.begin();
      auto m = std::find(methods.begin(), methods.end(), r.method) - methods.begin();
      if (seen[d][m]++) throw IoError("report: duplicate record for " + r.method + "/" + r.dataset +
                                      "/" + cell);
      t.mse[d][m] = r.mse;
    }
    for (std::size_t d = 0; d < datasets.size(); ++d)
      for (std::size_t m = 0; m < methods.size(); ++m)
        if (!seen[d][m])
          throw IoError("report: missing record for " + methods[m] + "/" + datasets[d] + "/" + cell);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace gasdro::app
