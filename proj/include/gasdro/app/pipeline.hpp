#pragma once

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gasdro/app/config.hpp"
#include "gasdro/app/metrics.hpp"
#include "gasdro/baselines/erm.hpp"
#include "gasdro/baselines/kldro.hpp"
#include "gasdro/baselines/wdro.hpp"
#include "gasdro/databench/corrupt.hpp"
#include "gasdro/databench/dataset.hpp"
#include "gasdro/databench/metrics.hpp"
#include "gasdro/databench/series.hpp"
#include "gasdro/dro/adversary.hpp"
#include "gasdro/dro/forecast.hpp"
#include "gasdro/dro/solver.hpp"
#include "gasdro/genmodels/training.hpp"
#include "gasdro/theory/probes.hpp"

namespace gasdro::app {

namespace fs = std::filesystem;
using nc::Rng;
using nc::Tensor;

// Child streams of the run seed. Each consumer owns one so that changing one
// stage never shifts the draws of another.
enum Stream : std::uint64_t {
  kDataStream = 1,
  kInitStream = 2,
  kPermStream = 3,
  kGenStream = 4,
  kSolverStream = 5,
  kEvalStream = 6,
  kProbeStream = 7,
};

/// Files under the output directory.
struct Layout {
  fs::path root;

  fs::path data_dir() const { return root / "data"; }
  fs::path train_csv() const { return data_dir() / "train.csv"; }
  fs::path test_csv(const std::string& id) const { return data_dir() / ("test_" + id + ".csv"); }
  fs::path model_file(GeneratorKind g) const {
    return root / "models" / (std::string(to_string(g)) + ".txt");
  }
  fs::path run_dir(const std::string& name) const { return root / "runs" / name; }
  fs::path metrics_dir() const { return root / "metrics"; }
  fs::path metrics_file(const std::string& name) const { return metrics_dir() / (name + ".txt"); }
  fs::path report_dir() const { return root / "report"; }
  fs::path sweep_dir() const { return root / "sweep"; }
};

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create directory " + p.string());
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline long peak_rss_kb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return u.ru_maxrss;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---- data -----------------------------------------------------------------------

/// Writes data/train.csv and one data/test_<id>.csv per OOD set. Synthetic
/// families each draw from their own child of the data stream.
inline std::vector<fs::path> gen_data(const ExperimentConfig& c, const Layout& lay) {
  ensure_dir(lay.data_dir());
  std::vector<fs::path> written;
  if (c.data.source == "synthetic") {
    Rng root = Rng(c.seed).derive(kDataStream);
    Rng tr = root.derive(0);
    data::write_series_csv(lay.train_csv().string(),
                           data::synth_series(c.train_family, c.data.train_length, tr));
    written.push_back(lay.train_csv());
    for (std::size_t i = 0; i < c.test_families.size(); ++i) {
      Rng r = root.derive(i + 1);
      auto path = lay.test_csv(c.test_families[i].id);
      data::write_series_csv(path.string(),
                             data::synth_series(c.test_families[i], c.data.test_length, r));
      written.push_back(path);
    }
  } else {
    data::write_series_csv(lay.train_csv().string(), data::ingest_csv(c.data.train_csv));
    written.push_back(lay.train_csv());
    for (std::size_t i = 0; i < c.data.test_csvs.size(); ++i) {
      auto path = lay.test_csv(c.data.test_ids[i]);
      data::write_series_csv(path.string(), data::ingest_csv(c.data.test_csvs[i]));
      written.push_back(path);
    }
  }
  return written;
}

/// Normalized windows of the training series and every OOD set, all scaled by
/// the training statistics.
struct Bench {
  data::SequenceDataset train;
  std::vector<std::string> ids;
  std::vector<data::SequenceDataset> tests;
  data::NormStats stats;
};

inline Bench load_bench(const ExperimentConfig& c, const Layout& lay) {
  if (!fs::exists(lay.train_csv()))
    throw IoError("no dataset at " + lay.data_dir().string() + " (run gen-data first)");
  const auto& d = c.data;
  Bench b;
  auto train = data::window(data::ingest_csv(lay.train_csv().string()), d.input_len, d.output_len,
                            d.stride);
  b.stats = data::fit_normalization(train);
  b.train = data::normalize(std::move(train), b.stats);
  for (const auto& id : d.test_ids) {
    auto t = data::window(data::ingest_csv(lay.test_csv(id).string()), d.input_len, d.output_len,
                          d.stride);
    b.ids.push_back(id);
    b.tests.push_back(data::normalize(std::move(t), b.stats));
  }
  return b;
}

inline Tensor targets(const data::SequenceDataset& ds) {
  Tensor y(ds.size(), ds.output_len);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.output_len; ++j) y(i, j) = ds.windows(i, ds.input_len + j);
  return y;
}

// FNV-1a over the bytes of the values; ties cached generators to their data.
inline std::uint64_t fingerprint(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : t.values()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char byte : bytes) h = (h ^ byte) * 1099511628211ULL;
  }
  return h;
}

// ---- generators -----------------------------------------------------------------

inline std::string generator_key(const ExperimentConfig& c, const Tensor& train) {
  std::ostringstream k;
  k << "seed=" << c.seed << ";data=" << fingerprint(train) << ';';
  if (c.generator == GeneratorKind::ddpm) {
    const auto& g = c.ddpm;
    k << "ddpm;T=" << g.T << ";b=" << fmt(g.beta_min) << ',' << fmt(g.beta_max)
      << ";ss=" << fmt(g.sigma_samp) << ";tft=" << g.fine_tuned_steps << ";h=" << join(g.hidden)
      << ";act=" << nc::to_string(g.activation) << ";steps=" << g.steps << ";batch=" << g.batch
      << ";lr=" << fmt(g.lr) << ";fr=" << fmt(g.final_lr_fraction);
  } else {
    const auto& v = c.vae;
    k << "vae;z=" << v.latent << ";h=" << join(v.hidden) << ";act=" << nc::to_string(v.activation)
      << ";var=" << fmt(v.decoder_var) << ";steps=" << v.steps << ";batch=" << v.batch
      << ";lr=" << fmt(v.lr) << ";fr=" << fmt(v.final_lr_fraction);
  }
  return k.str();
}

// Returns true and fills the parameter vectors when the cache matches `key`.
inline bool read_cached(const fs::path& path, const std::string& key,
                        std::vector<nc::ParamVector*> params) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line) || line != "key " + key) return false;
  for (auto* p : params) *p = nc::read_params(in);
  return true;
}

inline void write_cached(const fs::path& path, const std::string& key,
                         const std::vector<const nc::ParamVector*>& params) {
  ensure_dir(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "key " << key << '\n';
  for (const auto* p : params) nc::write_params(out, *p);
}

/// Pretrained DDPM for the run, from the cache file when its key matches.
/// Init and training draw from the generator stream in that order, so a cached
/// model equals a freshly trained one.
inline gen::DiffusionModel ensure_ddpm(const ExperimentConfig& c, const Layout& lay,
                                       const Tensor& train) {
  const auto& g = c.ddpm;
  Rng rng = Rng(c.seed).derive(kGenStream);
  auto model = gen::make_diffusion_model(
      gen::build_schedule(g.T, g.beta_min, g.beta_max, g.sigma_samp), train.cols(), g.hidden,
      g.activation, g.fine_tuned_steps, rng);
  ExperimentConfig cc = c;
  cc.generator = GeneratorKind::ddpm;
  const std::string key = generator_key(cc, train);
  const auto path = lay.model_file(GeneratorKind::ddpm);
  if (read_cached(path, key, {&model.theta})) {
    model.validate();
    return model;
  }
  gen::train_diffusion(model, train, {g.steps, g.batch, g.lr, g.final_lr_fraction}, rng);
  write_cached(path, key, {&model.theta});
  return model;
}

inline gen::VaeModel ensure_vae(const ExperimentConfig& c, const Layout& lay, const Tensor& train) {
  const auto& v = c.vae;
  Rng rng = Rng(c.seed).derive(kGenStream);
  auto model = gen::make_vae_model(train.cols(), v.latent, v.hidden, v.activation, v.decoder_var, rng);
  ExperimentConfig cc = c;
  cc.generator = GeneratorKind::vae;
  const std::string key = generator_key(cc, train);
  const auto path = lay.model_file(GeneratorKind::vae);
  if (read_cached(path, key, {&model.phi, &model.theta})) {
    model.validate();
    return model;
  }
  gen::train_vae(model, train, {v.steps, v.batch, v.lr, v.final_lr_fraction}, rng);
  write_cached(path, key, {&model.phi, &model.theta});
  return model;
}

// ---- checkpoints ----------------------------------------------------------------

struct Checkpoint {
  std::string method;
  dro::Predictor predictor;
  data::NormStats stats;
};

inline void write_checkpoint(const fs::path& path, const Checkpoint& ck) {
  ensure_dir(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& p = ck.predictor;
  std::vector<std::size_t> hidden(p.spec.widths.begin() + 1, p.spec.widths.end() - 1);
  out << "gasdro-checkpoint 1\n"
      << "method " << ck.method << '\n'
      << "input_len " << p.input_len << '\n'
      << "output_len " << p.output_len << '\n'
      << "hidden " << (hidden.empty() ? "-" : join(hidden)) << '\n'
      << "activation " << nc::to_string(p.spec.hidden) << '\n'
      << "norm_mean " << fmt(ck.stats.mean) << '\n'
      << "norm_std " << fmt(ck.stats.std) << '\n';
  nc::write_params(out, p.w);
  if (!out) throw IoError("write failed for " + path.string());
}

inline Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("no checkpoint at " + path.string() + " (run train first)");
  auto expect = [&](const char* tag) {
    std::string t, v;
    if (!(in >> t >> v) || t != tag) throw IoError(path.string() + ": expected '" + tag + "'");
    return v;
  };
  if (expect("gasdro-checkpoint") != "1") throw IoError(path.string() + ": unsupported version");
  Checkpoint ck;
  ck.method = expect("method");
  auto& p = ck.predictor;
  p.input_len = std::stoull(expect("input_len"));
  p.output_len = std::stoull(expect("output_len"));
  const std::string hidden = expect("hidden");
  p.spec.hidden = nc::parse_activation(expect("activation"));
  if (!data::detail::parse_double(expect("norm_mean"), ck.stats.mean) ||
      !data::detail::parse_double(expect("norm_std"), ck.stats.std))
    throw IoError(path.string() + ": bad normalization");
  p.spec.widths = {p.input_len};
  if (hidden != "-")
    for (const auto& h : KeyValues::split(hidden)) p.spec.widths.push_back(std::stoull(h));
  p.spec.widths.push_back(p.output_len);
  p.w = nc::read_params(in);
  nc::check_mlp_layout(p.spec, p.w);
  return ck;
}

// ---- training -------------------------------------------------------------------

struct TrainOutcome {
  dro::Predictor predictor;
  std::vector<std::string> diagnostics;  // one key=value line each
  std::vector<std::pair<std::string, std::string>> summary;
};

inline dro::Predictor initial_predictor(const ExperimentConfig& c) {
  Rng r = Rng(c.seed).derive(kInitStream);
  return dro::make_predictor(c.data.input_len, c.data.output_len, c.predictor.hidden,
                             c.predictor.activation, r);
}

inline void epoch_diagnostics(TrainOutcome& out, const char* method, const std::vector<double>& losses) {
  for (std::size_t e = 0; e < losses.size(); ++e)
    out.diagnostics.push_back(std::string("method=") + method + " kind=epoch epoch=" +
                              std::to_string(e + 1) + " loss=" + fmt(losses[e]));
  if (!losses.empty()) out.summary.emplace_back("final_train_objective", fmt(losses.back()));
}

inline double budget_for(const GasDroConfig& s, double j0) {
  switch (s.budget_mode) {
    case BudgetMode::absolute: return s.eps;
    case BudgetMode::excess: return j0 + s.eps;
    case BudgetMode::relative: return j0 * (1.0 + s.eps);
  }
  return s.eps;
}

template <dro::Adversary A>
void run_gasdro(const ExperimentConfig& c, A& adv, TrainOutcome& out) {
  const auto& s = c.gasdro;
  const double j0 = adv.measure_reconstruction();
  dro::DualState dual{s.mu, s.eta, budget_for(s, j0)};
  dro::SolverConfig sc;
  sc.outer_iterations = s.H;
  sc.samples = s.n;
  sc.lambda = s.lambda;
  sc.outer_steps = s.outer_steps;
  sc.outer_batch = s.batch;
  sc.refresh_reference = s.refresh_reference;
  sc.inner.epochs = s.K;
  sc.inner.samples = s.inner_samples;
  sc.inner.ascent_steps = s.ascent_steps;
  sc.inner.lr = s.inner_lr;
  sc.inner.ppo.kappa = s.kappa;
  sc.inner.ppo.kind = s.objective == "vpg" ? dro::ObjectiveKind::vpg : dro::ObjectiveKind::ppo;
  dro::ForecastLoss loss{&out.predictor};
  Rng rng = Rng(c.seed).derive(kSolverStream);
  auto res = dro::outer_min(loss, adv, dual, sc, rng, [&](const dro::DiagnosticRecord& r) {
    std::string line = "method=gasdro kind=" + r.kind + " iteration=" + std::to_string(r.iteration);
    if (r.kind == "inner")
      line += " epoch=" + std::to_string(r.epoch) + " objective=" + fmt(r.objective);
    line += " J=" + fmt(r.reconstruction) + " mu=" + fmt(r.mu);
    if (r.kind == "outer") line += " worst_case=" + fmt(r.worst_case);
    out.diagnostics.push_back(line);
  });
  out.summary.emplace_back("j0", fmt(j0));
  out.summary.emplace_back("budget", fmt(dual.eps));
  out.summary.emplace_back("final_J", fmt(res.iterations.back().reconstruction));
  out.summary.emplace_back("final_mu", fmt(dual.mu));
  out.summary.emplace_back("final_worst_case", fmt(res.iterations.back().worst_case));
}

/// Trains one method on the bench's training windows. GAS-DRO and DML use the
/// pretrained generator (cached under models/).
inline TrainOutcome train_method(const ExperimentConfig& c, const Layout& lay, const Bench& b,
                                 Method m) {
  TrainOutcome out;
  out.predictor = initial_predictor(c);
  const base::TrainConfig tc{c.train.epochs, c.train.batch, c.train.lr};
  Rng perm = Rng(c.seed).derive(kPermStream);
  const Tensor& x = b.train.windows;
  out.summary.emplace_back("method", to_string(m));
  out.summary.emplace_back("seed", std::to_string(c.seed));
  out.summary.emplace_back("train_windows", std::to_string(x.rows()));
  switch (m) {
    case Method::erm:
      epoch_diagnostics(out, "erm", base::train_erm(out.predictor, x, tc, perm));
      break;
    case Method::dml: {
      if (c.generator != GeneratorKind::ddpm)
        throw ConfigError("method dml needs generator = ddpm");
      auto g = ensure_ddpm(c, lay, x);
      const long long n = c.dml_augment_n < 0 ? static_cast<long long>(x.rows()) : c.dml_augment_n;
      out.summary.emplace_back("augment_n", std::to_string(n));
      epoch_diagnostics(out, "dml", base::train_dml(out.predictor, x, g, n, tc, perm));
      break;
    }
    case Method::kldro: {
      base::KlDroConfig kl;
      kl.eps_kl = c.kldro.eps;
      kl.alpha_lo = c.kldro.alpha_lo;
      kl.alpha_hi = c.kldro.alpha_hi;
      kl.search_tol = c.kldro.tol;
      epoch_diagnostics(out, "kldro", base::train_kldro(out.predictor, x, kl, tc, perm));
      break;
    }
    case Method::wdro:
      epoch_diagnostics(out, "wdro",
                        base::train_wdro(out.predictor, x, {c.wdro.eps, c.wdro.steps, c.wdro.lr}, tc, perm));
      break;
    case Method::gasdro: {
      if (c.gasdro.warm_start) epoch_diagnostics(out, "erm", base::train_erm(out.predictor, x, tc, perm));
      out.summary.emplace_back("generator", to_string(c.generator));
      out.summary.emplace_back("eps", fmt(c.gasdro.eps));
      out.summary.emplace_back("budget_mode", to_string(c.gasdro.budget_mode));
      if (c.generator == GeneratorKind::ddpm) {
        dro::DiffusionAdversary adv(ensure_ddpm(c, lay, x), x);
        run_gasdro(c, adv, out);
      } else {
        dro::VaeAdversary adv(ensure_vae(c, lay, x), x, c.vae.eps_z);
        run_gasdro(c, adv, out);
      }
      break;
    }
  }
  return out;
}

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  ensure_dir(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

/// train subcommand for one method: checkpoint, diagnostics, summary (all
/// deterministic) and timing (wall clock and peak RSS, not deterministic).
inline TrainOutcome cmd_train(const ExperimentConfig& c, const Layout& lay, Method m) {
  Stopwatch sw;
  Bench b = load_bench(c, lay);
  TrainOutcome out = train_method(c, lay, b, m);
  const auto dir = lay.run_dir(to_string(m));
  write_checkpoint(dir / "checkpoint.txt", {to_string(m), out.predictor, b.stats});
  write_lines(dir / "diagnostics.txt", out.diagnostics);
  std::vector<std::string> summary;
  for (const auto& [k, v] : out.summary) summary.push_back(k + "=" + v);
  write_lines(dir / "summary.txt", summary);
  write_lines(dir / "timing.txt", {"seconds=" + fmt(sw.seconds()),
                                   "peak_rss_kb=" + std::to_string(peak_rss_kb())});
  return out;
}

// ---- evaluation -----------------------------------------------------------------

inline std::string cell_label(const data::CorruptionSpec& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s@%g", data::to_string(s.kind), s.level());
  return buf;
}

/// MSE of `p` on every OOD set, clean and under each corruption cell. The
/// corruption draws depend on (seed, dataset, cell) only, so every method sees
/// the same corrupted windows.
inline std::vector<MetricsRecord> evaluate(const ExperimentConfig& c, const Bench& b,
                                           const dro::Predictor& p, const std::string& method,
                                           const std::string& run) {
  if (p.input_len != c.data.input_len || p.output_len != c.data.output_len)
    throw ShapeError("checkpoint predicts " + std::to_string(p.input_len) + "->" +
                     std::to_string(p.output_len) + " but the config windows are " +
                     std::to_string(c.data.input_len) + "->" + std::to_string(c.data.output_len));
  const auto grid = c.corruption_grid();
  Rng root = Rng(c.seed).derive(kEvalStream);
  std::vector<MetricsRecord> out;
  for (std::size_t d = 0; d < b.tests.size(); ++d) {
    const auto& t = b.tests[d];
    MetricsRecord r;
    r.run = run;
    r.method = method;
    r.dataset = b.ids[d];
    r.windows = t.size();
    r.shift_w1 = data::wasserstein1(b.train.windows, t.windows);
    r.mse = data::mse(dro::forecast(p, t.windows), targets(t));
    out.push_back(r);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      Rng cr = root.derive(d).derive(k + 1);
      auto ct = data::corrupt(t, grid[k], cr);
      MetricsRecord rc = r;
      rc.corruption = cell_label(grid[k]);
      rc.mse = data::mse(dro::forecast(p, ct.windows), targets(ct));
      out.push_back(rc);
    }
  }
  return out;
}

inline std::vector<MetricsRecord> cmd_eval(const ExperimentConfig& c, const Layout& lay, Method m) {
  auto ck = read_checkpoint(lay.run_dir(to_string(m)) / "checkpoint.txt");
  if (ck.method != to_string(m))
    throw IoError("checkpoint under runs/" + std::string(to_string(m)) + " is for " + ck.method);
  Bench b = load_bench(c, lay);
  auto recs = evaluate(c, b, ck.predictor, to_string(m),
                       std::string(to_string(m)) + "-s" + std::to_string(c.seed));
  ensure_dir(lay.metrics_dir());
  write_metrics(lay.metrics_file(to_string(m)).string(), recs);
  return recs;
}

inline double clean_average(const std::vector<MetricsRecord>& recs) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : recs)
    if (r.corruption == "clean") {
      s += r.mse;
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

inline double clean_worst(const std::vector<MetricsRecord>& recs) {
  double w = 0.0;
  for (const auto& r : recs)
    if (r.corruption == "clean") w = std::max(w, r.mse);
  return w;
}

// ---- report ---------------------------------------------------------------------

inline std::string table_file_name(const std::string& cell) {
  std::string s = "mse_" + cell + ".csv";
  std::replace(s.begin(), s.end(), '@', '_');
  return s;
}

/// Reads every metrics/*.txt (sorted by name) and writes one CSV per
/// corruption cell under report/.
inline std::vector<SummaryTable> cmd_report(const Layout& lay) {
  if (!fs::is_directory(lay.metrics_dir()))
    throw IoError("no metrics under " + lay.metrics_dir().string() + " (run eval first)");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(lay.metrics_dir()))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<MetricsRecord> recs;
  for (const auto& f : files) {
    auto r = read_metrics(f.string());
    recs.insert(recs.end(), r.begin(), r.end());
  }
  auto tables = summarize(recs);
  ensure_dir(lay.report_dir());
  for (const auto& t : tables) {
    std::ofstream out(lay.report_dir() / table_file_name(t.corruption));
    if (!out) throw IoError("cannot write report table");
    out << t.csv();
  }
  return tables;
}

// ---- budget sweep ---------------------------------------------------------------

struct SweepPoint {
  double eps = 0.0;
  double average_mse = 0.0;
  double worst_mse = 0.0;
};

/// GAS-DRO trained once per budget (generator shared through the cache); the
/// clean average OOD MSE per budget, sorted by eps.
inline std::vector<SweepPoint> run_sweep(const ExperimentConfig& c, const Layout& lay, const Bench& b,
                                         std::vector<double> eps_list,
                                         const std::function<void(const SweepPoint&)>& progress = {}) {
  if (eps_list.empty()) throw ConfigError("sweep-eps: empty eps list");
  std::sort(eps_list.begin(), eps_list.end());
  std::vector<SweepPoint> out;
  for (double e : eps_list) {
    ExperimentConfig ce = c;
    ce.gasdro.eps = e;
    auto res = train_method(ce, lay, b, Method::gasdro);
    auto recs = evaluate(ce, b, res.predictor, "gasdro", "gasdro-eps" + fmt(e));
    out.push_back({e, clean_average(recs), clean_worst(recs)});
    if (progress) progress(out.back());
  }
  return out;
}

inline std::vector<SweepPoint> cmd_sweep_eps(const ExperimentConfig& c, const Layout& lay,
                                             const std::vector<double>& eps_list) {
  if (std::find(c.methods.begin(), c.methods.end(), Method::gasdro) == c.methods.end())
    throw ConfigError("sweep-eps needs method = gasdro");
  Bench b = load_bench(c, lay);
  auto pts = run_sweep(c, lay, b, eps_list);
  ensure_dir(lay.sweep_dir());
  std::ofstream out(lay.sweep_dir() / "eps_curve.csv");
  if (!out) throw IoError("cannot write sweep table");
  out << "eps,average_mse\n";
  for (const auto& p : pts) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%g,%.6f\n", p.eps, p.average_mse);
    out << buf;
  }
  return pts;
}

// ---- verification ---------------------------------------------------------------

inline const std::vector<std::string>& probe_names() {
  static const std::vector<std::string> names{"dual-lemma", "theorem1", "theorem2",
                                              "toy-identities"};
  return names;
}

/// Runs the selected probes (all when `only` is empty), one report line each.
inline std::vector<theory::ProbeReport> cmd_verify(std::uint64_t seed, const std::vector<std::string>& only,
                                                   std::ostream& log) {
  for (const auto& n : only)
    if (std::find(probe_names().begin(), probe_names().end(), n) == probe_names().end())
      throw ConfigError("unknown probe '" + n + "' (dual-lemma, theorem1, theorem2, toy-identities)");
  auto selected = [&](const std::string& n) {
    return only.empty() || std::find(only.begin(), only.end(), n) != only.end();
  };
  Rng root = Rng(seed).derive(kProbeStream);
  std::vector<theory::ProbeReport> reps;
  auto emit = [&](theory::ProbeReport r) {
    log << r.line() << '\n';
    for (const auto& note : r.notes) log << "  note: " << note << '\n';
    reps.push_back(std::move(r));
  };
  if (selected("dual-lemma")) {
    Rng r = root.derive(1);
    emit(theory::check_dual_lemma(1000, r));
  }
  if (selected("theorem1")) {
    Rng r = root.derive(2);
    auto res = theory::check_theorem1({}, r);
    for (const auto& row : res.rows) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "  K=%zu gap=%.5f se=%.5f bound=%.5f mean_kl=%.5f\n", row.K,
                    row.gap, row.se, row.bound, row.mean_kl);
      log << buf;
    }
    emit(res.report);
  }
  if (selected("theorem2")) {
    Rng r = root.derive(3);
    emit(theory::check_theorem2_trend({}, r).report);
  }
  if (selected("toy-identities")) emit(theory::check_toy_identities());
  return reps;
}

}  // namespace gasdro::app
