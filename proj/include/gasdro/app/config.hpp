#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gasdro/databench/corrupt.hpp"
#include "gasdro/databench/series.hpp"
#include "gasdro/error.hpp"
#include "gasdro/numcore/mlp.hpp"

namespace gasdro::app {

// Flat `key = value` text. '#' starts a comment, blank lines are ignored,
// keys are dotted (section.name). Lists are comma separated.
class KeyValues {
 public:
  static KeyValues parse(std::istream& is, const std::string& origin = "<config>") {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = data::detail::trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = data::detail::trim(line.substr(0, eq));
      std::string value = data::detail::trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (kv.values_.count(key))
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
      kv.values_[key] = value;
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse(in, path);
  }

  // "key=value" from the command line; replaces any file value.
  void set_assignment(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + assignment);
    std::string key = data::detail::trim(assignment.substr(0, eq));
    if (key.empty()) throw ConfigError("--set: empty key");
    values_[key] = data::detail::trim(assignment.substr(eq + 1));
  }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void touch(const std::string& key) const { used_.insert(key); }
  const std::map<std::string, std::string>& all() const { return values_; }

  std::string str(const std::string& key, const std::string& def) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }
  std::string required(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw ConfigError("missing required key " + key);
    return it->second;
  }
  double num(const std::string& key, double def) const {
    if (!has(key)) {
      touch(key);
      return def;
    }
    return to_double(key, str(key, ""));
  }
  std::size_t count(const std::string& key, std::size_t def) const {
    if (!has(key)) {
      touch(key);
      return def;
    }
    return to_count(key, str(key, ""));
  }
  long long integer(const std::string& key, long long def) const {
    if (!has(key)) {
      touch(key);
      return def;
    }
    const std::string s = str(key, "");
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
  }
  bool flag(const std::string& key, bool def) const {
    if (!has(key)) {
      touch(key);
      return def;
    }
    const std::string s = str(key, "");
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + s + "'");
  }
  std::vector<std::string> list(const std::string& key, const std::vector<std::string>& def) const {
    if (!has(key)) {
      touch(key);
      return def;
    }
    return split(str(key, ""));
  }
  std::vector<double> nums(const std::string& key, const std::vector<double>& def) const {
    if (!has(key)) {
      touch(key);
      return def;
    }
    std::vector<double> out;
    for (const auto& s : split(str(key, ""))) out.push_back(to_double(key, s));
    return out;
  }
  std::vector<std::size_t> counts(const std::string& key, const std::vector<std::size_t>& def) const {
    if (!has(key)) {
      touch(key);
      return def;
    }
    std::vector<std::size_t> out;
    for (const auto& s : split(str(key, ""))) out.push_back(to_count(key, s));
    return out;
  }

  // Keys present in the file that nothing read. Catches typos.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = data::detail::trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

 private:
  static double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    if (!data::detail::parse_double(s, v)) throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
  }
  static std::size_t to_count(const std::string& key, const std::string& s) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    bool ok = !s.empty() && s[0] != '-';
    if (ok) {
      try {
        v = std::stoull(s, &pos);
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok || pos != s.size())
      throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    return static_cast<std::size_t>(v);
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

enum class Method { erm, dml, kldro, wdro, gasdro };
enum class GeneratorKind { ddpm, vae };
enum class BudgetMode { absolute, excess, relative };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::erm: return "erm";
    case Method::dml: return "dml";
    case Method::kldro: return "kldro";
    case Method::wdro: return "wdro";
    case Method::gasdro: return "gasdro";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::erm, Method::dml, Method::kldro, Method::wdro, Method::gasdro})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + s + "' (erm, dml, kldro, wdro, gasdro)");
}

inline const char* to_string(GeneratorKind g) { return g == GeneratorKind::ddpm ? "ddpm" : "vae"; }

inline GeneratorKind parse_generator(const std::string& s) {
  if (s == "ddpm") return GeneratorKind::ddpm;
  if (s == "vae") return GeneratorKind::vae;
  throw ConfigError("unknown generator '" + s + "' (ddpm, vae)");
}

inline const char* to_string(BudgetMode b) {
  switch (b) {
    case BudgetMode::absolute: return "absolute";
    case BudgetMode::excess: return "excess";
    case BudgetMode::relative: return "relative";
  }
  return "?";
}

inline BudgetMode parse_budget_mode(const std::string& s) {
  for (BudgetMode b : {BudgetMode::absolute, BudgetMode::excess, BudgetMode::relative})
    if (s == to_string(b)) return b;
  throw ConfigError("unknown gasdro.budget_mode '" + s + "' (absolute, excess, relative)");
}

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::size_t input_len = 16;
  std::size_t output_len = 4;
  std::size_t stride = 2;
  std::size_t train_length = 800;
  std::size_t test_length = 400;
  std::string train_csv;
  std::vector<std::string> test_csvs;
  std::vector<std::string> test_ids;  // OOD family ids, or names for the CSV files
};

struct PredictorConfig {
  std::vector<std::size_t> hidden{32};
  nc::Activation activation = nc::Activation::tanh;
};

struct TrainSettings {
  std::size_t epochs = 60;
  std::size_t batch = 64;
  double lr = 1e-3;
};

struct DdpmConfig {
  std::size_t T = 32;
  double beta_min = 1e-3;
  double beta_max = 0.3;
  double sigma_samp = 0.1;
  std::size_t fine_tuned_steps = 8;
  std::vector<std::size_t> hidden{128, 128};
  nc::Activation activation = nc::Activation::relu;
  std::size_t steps = 4000;
  std::size_t batch = 128;
  double lr = 3e-3;
  double final_lr_fraction = 0.02;
};

struct VaeConfig {
  std::size_t latent = 4;
  std::vector<std::size_t> hidden{64};
  nc::Activation activation = nc::Activation::tanh;
  double decoder_var = 0.05;
  double eps_z = 0.25;
  std::size_t steps = 3000;
  std::size_t batch = 128;
  double lr = 3e-3;
  double final_lr_fraction = 0.05;
};

struct GasDroConfig {
  double eps = 0.02;
  BudgetMode budget_mode = BudgetMode::relative;
  double mu = 0.5;
  double eta = 0.01;
  double kappa = 0.4;
  std::string objective = "ppo";
  std::size_t K = 10;
  std::size_t H = 15;
  std::size_t n = 512;
  double lambda = 1e-3;
  double inner_lr = 1e-3;
  std::size_t inner_samples = 64;
  std::size_t ascent_steps = 1;
  std::size_t outer_steps = 50;
  std::size_t batch = 64;
  bool refresh_reference = true;
  bool warm_start = true;
};

struct KlDroSettings {
  double eps = 4.0;
  double alpha_lo = 1e-6;
  double alpha_hi = 1e6;
  double tol = 1e-10;
};

struct WDroSettings {
  double eps = 0.3;
  std::size_t steps = 5;
  double lr = 0.1;
};

struct EvalConfig {
  std::vector<data::CorruptionKind> corruptions;
  std::vector<double> levels;
  std::size_t perlin_octaves = 8;
  double cutout_fill = 1.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::erm};
  GeneratorKind generator = GeneratorKind::ddpm;
  DataConfig data;
  data::ShiftFamilyConfig train_family;
  std::vector<data::ShiftFamilyConfig> test_families;
  PredictorConfig predictor;
  TrainSettings train;
  DdpmConfig ddpm;
  VaeConfig vae;
  GasDroConfig gasdro;
  long long dml_augment_n = -1;  // -1: as many as the training windows
  KlDroSettings kldro;
  WDroSettings wdro;
  EvalConfig eval;
  std::vector<double> sweep_eps{0.001, 0.005, 0.02, 0.08, 0.3};

  std::vector<data::CorruptionSpec> corruption_grid() const {
    std::vector<data::CorruptionSpec> grid;
    for (auto kind : eval.corruptions)
      for (double level : eval.levels) {
        auto s = data::CorruptionSpec::at_level(kind, level);
        s.octaves = eval.perlin_octaves;
        s.fill = eval.cutout_fill;
        grid.push_back(s);
      }
    return grid;
  }
};

namespace detail {

// family.<id>.<field>, falling back to the training family's value.
inline data::ShiftFamilyConfig read_family(const KeyValues& kv, const std::string& id,
                                           const data::ShiftFamilyConfig& base) {
  const std::string p = "family." + id + ".";
  data::ShiftFamilyConfig f = base;
  f.id = id;
  f.level = kv.num(p + "level", base.level);
  f.frequencies = kv.nums(p + "frequencies", base.frequencies);
  f.amplitudes = kv.nums(p + "amplitudes", base.amplitudes);
  f.trend = kv.num(p + "trend", base.trend);
  f.regime_offsets = kv.nums(p + "regime_offsets", base.regime_offsets);
  f.regime_length = kv.count(p + "regime_length", base.regime_length);
  f.noise_std = kv.num(p + "noise_std", base.noise_std);
  f.random_phase = kv.flag(p + "random_phase", base.random_phase);
  f.validate();
  return f;
}

inline void require_positive(double v, const char* key) {
  if (!(v > 0.0)) throw ConfigError(std::string(key) + " must be positive");
}
inline void require_nonzero(std::size_t v, const char* key) {
  if (v == 0) throw ConfigError(std::string(key) + " must be at least 1");
}

}  // namespace detail

/// Builds the experiment from key-values. Every key must be known; `seed` is
/// mandatory.
inline ExperimentConfig build_config(const KeyValues& kv) {
  ExperimentConfig c;
  const long long seed = kv.integer("seed", -1);
  if (!kv.has("seed")) throw ConfigError("missing required key seed");
  if (seed < 0) throw ConfigError("seed must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);

  c.methods.clear();
  for (const auto& m : kv.list("method", {"erm"})) c.methods.push_back(parse_method(m));
  if (c.methods.empty()) throw ConfigError("method: empty list");
  c.generator = parse_generator(kv.str("generator", "ddpm"));

  auto& d = c.data;
  d.source = kv.str("data.source", d.source);
  if (d.source != "synthetic" && d.source != "csv")
    throw ConfigError("data.source must be synthetic or csv");
  d.input_len = kv.count("data.input_len", d.input_len);
  d.output_len = kv.count("data.output_len", d.output_len);
  d.stride = kv.count("data.stride", d.stride);
  d.train_length = kv.count("data.train_length", d.train_length);
  d.test_length = kv.count("data.test_length", d.test_length);
  d.train_csv = kv.str("data.train_csv", "");
  d.test_csvs = kv.list("data.test_csvs", {});
  detail::require_nonzero(d.input_len, "data.input_len");
  detail::require_nonzero(d.output_len, "data.output_len");
  detail::require_nonzero(d.stride, "data.stride");

  c.train_family = detail::read_family(kv, "train", data::ShiftFamilyConfig{});
  if (d.source == "synthetic") {
    d.test_ids = kv.list("data.test_families", {"shifted"});
    if (d.test_ids.empty()) throw ConfigError("data.test_families: need at least one family");
    std::set<std::string> seen;
    for (const auto& id : d.test_ids) {
      if (id == "train" || !seen.insert(id).second)
        throw ConfigError("data.test_families: ids must be unique and not 'train'");
      c.test_families.push_back(detail::read_family(kv, id, c.train_family));
    }
  } else {
    if (d.train_csv.empty()) throw ConfigError("data.source = csv needs data.train_csv");
    if (d.test_csvs.empty()) throw ConfigError("data.source = csv needs data.test_csvs");
    d.test_ids = kv.list("data.test_ids", {});
    if (d.test_ids.empty())
      for (std::size_t i = 0; i < d.test_csvs.size(); ++i)
        d.test_ids.push_back("test" + std::to_string(i + 1));
    if (d.test_ids.size() != d.test_csvs.size())
      throw ConfigError("data.test_ids and data.test_csvs differ in length");
  }

  c.predictor.hidden = kv.counts("predictor.hidden", c.predictor.hidden);
  c.predictor.activation =
      nc::parse_activation(kv.str("predictor.activation", nc::to_string(c.predictor.activation)));

  c.train.epochs = kv.count("train.epochs", c.train.epochs);
  c.train.batch = kv.count("train.batch", c.train.batch);
  c.train.lr = kv.num("train.lr", c.train.lr);
  detail::require_nonzero(c.train.batch, "train.batch");
  detail::require_positive(c.train.lr, "train.lr");

  auto& g = c.ddpm;
  g.T = kv.count("ddpm.T", g.T);
  g.beta_min = kv.num("ddpm.beta_min", g.beta_min);
  g.beta_max = kv.num("ddpm.beta_max", g.beta_max);
  g.sigma_samp = kv.num("ddpm.sigma_samp", g.sigma_samp);
  g.fine_tuned_steps = kv.count("ddpm.fine_tuned_steps", g.fine_tuned_steps);
  g.hidden = kv.counts("ddpm.hidden", g.hidden);
  g.activation = nc::parse_activation(kv.str("ddpm.activation", nc::to_string(g.activation)));
  g.steps = kv.count("ddpm.steps", g.steps);
  g.batch = kv.count("ddpm.batch", g.batch);
  g.lr = kv.num("ddpm.lr", g.lr);
  g.final_lr_fraction = kv.num("ddpm.final_lr_fraction", g.final_lr_fraction);
  detail::require_nonzero(g.batch, "ddpm.batch");
  detail::require_positive(g.lr, "ddpm.lr");

  auto& v = c.vae;
  v.latent = kv.count("vae.latent", v.latent);
  v.hidden = kv.counts("vae.hidden", v.hidden);
  v.activation = nc::parse_activation(kv.str("vae.activation", nc::to_string(v.activation)));
  v.decoder_var = kv.num("vae.decoder_var", v.decoder_var);
  v.eps_z = kv.num("vae.eps_z", v.eps_z);
  v.steps = kv.count("vae.steps", v.steps);
  v.batch = kv.count("vae.batch", v.batch);
  v.lr = kv.num("vae.lr", v.lr);
  v.final_lr_fraction = kv.num("vae.final_lr_fraction", v.final_lr_fraction);
  detail::require_nonzero(v.latent, "vae.latent");
  detail::require_nonzero(v.batch, "vae.batch");
  detail::require_positive(v.lr, "vae.lr");
  if (!(v.eps_z >= 0.0)) throw ConfigError("vae.eps_z must be >= 0");

  auto& s = c.gasdro;
  s.eps = kv.num("gasdro.eps", s.eps);
  s.budget_mode = parse_budget_mode(kv.str("gasdro.budget_mode", to_string(s.budget_mode)));
  s.mu = kv.num("gasdro.mu", s.mu);
  s.eta = kv.num("gasdro.eta", s.eta);
  s.kappa = kv.num("gasdro.kappa", s.kappa);
  s.objective = kv.str("gasdro.objective", s.objective);
  if (s.objective != "ppo" && s.objective != "vpg")
    throw ConfigError("gasdro.objective must be ppo or vpg");
  s.K = kv.count("gasdro.K", s.K);
  s.H = kv.count("gasdro.H", s.H);
  s.n = kv.count("gasdro.n", s.n);
  s.lambda = kv.num("gasdro.lambda", s.lambda);
  s.inner_lr = kv.num("gasdro.inner_lr", s.inner_lr);
  s.inner_samples = kv.count("gasdro.inner_samples", s.inner_samples);
  s.ascent_steps = kv.count("gasdro.ascent_steps", s.ascent_steps);
  s.outer_steps = kv.count("gasdro.outer_steps", s.outer_steps);
  s.batch = kv.count("gasdro.batch", s.batch);
  s.refresh_reference = kv.flag("gasdro.refresh_reference", s.refresh_reference);
  s.warm_start = kv.flag("gasdro.warm_start", s.warm_start);
  if (!(s.eps >= 0.0)) throw ConfigError("gasdro.eps must be >= 0");
  if (!(s.mu >= 0.0)) throw ConfigError("gasdro.mu must be >= 0");
  detail::require_positive(s.eta, "gasdro.eta");
  if (!(s.kappa > 0.0 && s.kappa < 1.0)) throw ConfigError("gasdro.kappa must lie in (0, 1)");
  detail::require_nonzero(s.K, "gasdro.K");
  detail::require_nonzero(s.H, "gasdro.H");
  detail::require_nonzero(s.n, "gasdro.n");
  detail::require_nonzero(s.inner_samples, "gasdro.inner_samples");
  detail::require_nonzero(s.batch, "gasdro.batch");
  detail::require_positive(s.lambda, "gasdro.lambda");
  detail::require_positive(s.inner_lr, "gasdro.inner_lr");

  c.dml_augment_n = kv.integer("dml.augment_n", c.dml_augment_n);
  if (c.dml_augment_n < -1) throw ConfigError("dml.augment_n must be >= 0 (or -1 for |data|)");

  c.kldro.eps = kv.num("kldro.eps", c.kldro.eps);
  c.kldro.alpha_lo = kv.num("kldro.alpha_lo", c.kldro.alpha_lo);
  c.kldro.alpha_hi = kv.num("kldro.alpha_hi", c.kldro.alpha_hi);
  c.kldro.tol = kv.num("kldro.tol", c.kldro.tol);
  c.wdro.eps = kv.num("wdro.eps", c.wdro.eps);
  c.wdro.steps = kv.count("wdro.steps", c.wdro.steps);
  c.wdro.lr = kv.num("wdro.lr", c.wdro.lr);

  for (const auto& k : kv.list("eval.corruptions", {}))
    c.eval.corruptions.push_back(data::parse_corruption(k));
  c.eval.levels = kv.nums("eval.levels", {});
  if (c.eval.corruptions.empty() != c.eval.levels.empty())
    throw ConfigError("eval.corruptions and eval.levels must be both set or both empty");
  c.eval.perlin_octaves = kv.count("eval.perlin_octaves", c.eval.perlin_octaves);
  c.eval.cutout_fill = kv.num("eval.cutout_fill", c.eval.cutout_fill);
  (void)c.corruption_grid();  // validates levels

  c.sweep_eps = kv.nums("sweep.eps", c.sweep_eps);

  if (auto extra = kv.unused(); !extra.empty()) {
    std::string msg = "unknown config key";
    msg += extra.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < extra.size(); ++i) msg += (i ? ", " : "") + extra[i];
    throw ConfigError(msg);
  }
  return c;
}

}  // namespace gasdro::app
