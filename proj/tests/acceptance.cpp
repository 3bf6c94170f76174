// Acceptance run: one line per criterion,
//   criterion <n> PASS|FAIL <name>: <measurements> [<seconds>s / limit <limit>s]
// Exit status is the number of failed criteria (0 when all pass).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gasdro/app/pipeline.hpp"
#include "support/fd.hpp"

using namespace gasdro;
using namespace gasdro::app;
using nc::Rng;
using nc::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;
std::vector<std::uint64_t> g_seeds{1, 2, 3, 4, 5};
std::vector<std::string> g_sets;

std::string f6(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6g", v);
  return b;
}

Tensor gaussian_batch(std::size_t n, std::size_t d, Rng& rng) {
  Tensor x(n, d);
  for (auto& v : x.values()) v = rng.normal();
  return x;
}

// ---- 1 ---------------------------------------------------------------------------

Outcome dual_lemma() {
  Rng rng(11);
  auto rep = theory::check_dual_lemma(1000, rng, 1e-9);
  return {rep.passed() && rep.trials == 1000,
          "trials=" + std::to_string(rep.trials) + " passes=" + std::to_string(rep.passes) +
              " min(rhs-lhs)=" + f6(rep.worst_slack)};
}

// ---- 2 ---------------------------------------------------------------------------

Outcome theorem1() {
  Rng rng(2024);
  auto res = theory::check_theorem1({}, rng);
  std::string d;
  for (const auto& r : res.rows)
    d += "K=" + std::to_string(r.K) + " gap=" + f6(r.gap) + "+-" + f6(r.se) + " bound=" + f6(r.bound) +
         " kl=" + f6(r.mean_kl) + "; ";
  return {res.report.passed(), d + res.report.line()};
}

// ---- 3 ---------------------------------------------------------------------------

// max q s.t. q ln 2q + (1-q) ln 2(1-q) <= eps, by bisection on q in [1/2, 1].
double two_point_oracle(double eps) {
  auto kl = [](double q) {
    auto t = [](double a) { return a > 0.0 ? a * std::log(2.0 * a) : 0.0; };
    return t(q) + t(1.0 - q);
  };
  double lo = 0.5, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (kl(mid) <= eps ? lo : hi) = mid;
  }
  return lo;
}

// sup E_q f over KL(q || uniform) <= eps: q_i ~ exp(b f_i), bisection on b.
double tilted_oracle(const std::vector<double>& f, double eps) {
  const double n = static_cast<double>(f.size());
  const double top = *std::max_element(f.begin(), f.end());
  const double at_top = static_cast<double>(std::count(f.begin(), f.end(), top));
  if (std::log(n / at_top) <= eps) return top;
  auto tilt = [&](double b, double& value) {
    double z = 0.0, zf = 0.0;
    for (double v : f) {
      const double w = std::exp(b * (v - top));
      z += w;
      zf += w * v;
    }
    value = zf / z;
    return b * value - (b * top + std::log(z / n));  // KL(q_b || uniform)
  };
  double lo = 0.0, hi = 1.0, value = 0.0;
  while (tilt(hi, value) < eps) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (tilt(mid, value) <= eps ? lo : hi) = mid;
  }
  tilt(lo, value);
  return value;
}

Outcome kl_duality() {
  Rng rng(3);
  double worst = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + rng.below(9);
    std::vector<double> f(n);
    for (auto& v : f) v = rng.uniform(0.0, 3.0);
    const double eps = std::vector<double>{0.01, 0.1, 0.5}[i % 3];
    base::KlDroConfig cfg;
    cfg.eps_kl = eps;
    const double dual = base::kl_dro_value(f, cfg);
    const double oracle_value = tilted_oracle(f, eps);
    worst = std::max(worst, std::abs(dual - oracle_value));
    ++count;
  }
  base::KlDroConfig cfg;
  cfg.eps_kl = 0.1;
  const double two = base::kl_dro_value({0.0, 1.0}, cfg);
  const double oracle = two_point_oracle(0.1);
  const bool ok = worst <= 1e-4 && std::abs(two - oracle) <= 1e-4 && std::abs(oracle - 0.720) < 5e-4;
  return {ok, "instances=" + std::to_string(count) + " max|dual-oracle|=" + f6(worst) +
                  " two-point dual=" + f6(two) + " oracle=" + f6(oracle)};
}

// ---- 4 ---------------------------------------------------------------------------

Outcome gradients() {
  using testsupport::numeric_grad;
  using testsupport::rel_error;
  std::vector<std::pair<std::string, double>> errs;

  {  // dm_loss
    Rng init(5);
    auto m = gen::make_diffusion_model(gen::build_schedule(6, 0.05, 0.3), 3, {12},
                                       nc::Activation::tanh, 2, init);
    Rng dr(4);
    Tensor batch = gaussian_batch(4, 3, dr);
    nc::Tape tape;
    Rng r0(31);
    tape.backward(gen::dm_loss(tape, m, batch, r0));
    auto a = m.theta.grad();
    auto n = numeric_grad(m.theta.values(), [&] {
      Rng r(31);
      return gen::dm_loss_value(m, batch, r);
    });
    errs.emplace_back("dm_loss", rel_error(a, n));
  }
  {  // vae_elbo, encoder and decoder
    Rng init(3);
    auto m = gen::make_vae_model(3, 2, {5}, nc::Activation::tanh, 0.25, init);
    Rng dr(5);
    Tensor x = gaussian_batch(4, 3, dr);
    auto value = [&] {
      Rng r(17);
      nc::Tape t;
      auto e = gen::vae_elbo(t, m, x, r);
      return e.recon.item() + e.prior_kl.item();
    };
    Rng r0(17);
    nc::Tape tape;
    auto e = gen::vae_elbo(tape, m, x, r0);
    tape.backward(nc::add(e.recon, e.prior_kl));
    auto gp = m.phi.grad(), gt = m.theta.grad();
    errs.emplace_back("vae_elbo", std::max(rel_error(gp, numeric_grad(m.phi.values(), value)),
                                           rel_error(gt, numeric_grad(m.theta.values(), value))));
  }
  {  // PPO Lagrangian, ratios kept 0.05 away from the clip kinks
    Rng rng(8);
    Tensor data = gaussian_batch(30, 2, rng);
    Rng init(2);
    auto g = gen::make_diffusion_model(gen::build_schedule(8, 0.05, 0.3), 2, {8},
                                       nc::Activation::tanh, 3, init);
    gen::train_diffusion(g, data, {50, 32, 1e-2}, init);
    dro::DiffusionAdversary adv(g, data);
    for (auto& v : adv.model.theta.values()) v += 0.02 * rng.normal();
    auto s = adv.draw(12, rng, dro::Source::reference);
    std::vector<double> f(12);
    for (auto& v : f) v = rng.uniform(0.5, 2.0);
    dro::PpoConfig cfg;
    double margin = 1e9;
    {
      nc::Tape t;
      for (double r : adv.ratio(t, s).value().values())
        margin = std::min({margin, std::abs(r - (1.0 - cfg.kappa)), std::abs(r - (1.0 + cfg.kappa))});
    }
    nc::Tape tape;
    tape.backward(dro::lagrangian_objective(tape, adv, 0.8, cfg, s, f).objective);
    auto a = adv.model.theta.grad();
    auto n = numeric_grad(adv.model.theta.values(), [&] {
      nc::Tape t;
      return dro::lagrangian_objective(t, adv, 0.8, cfg, s, f).objective.item();
    });
    errs.emplace_back("lagrangian_ppo", margin > 0.05 ? rel_error(a, n) : 1.0);
  }
  {  // forecast_loss
    Rng rng(4);
    auto p = dro::make_predictor(6, 3, {8, 5}, nc::Activation::tanh, rng);
    Tensor win = gaussian_batch(7, 9, rng);
    nc::Tape tape;
    tape.backward(dro::forecast_loss(tape, p, tape.constant(win)));
    auto a = p.w.grad();
    auto n = numeric_grad(p.w.values(), [&] {
      double s = 0.0;
      for (double v : dro::forecast_losses(p, win)) s += v;
      return s / 7.0;
    });
    errs.emplace_back("forecast_loss", rel_error(a, n));
  }
  {  // kl_dro_loss
    Rng rng(6);
    auto p = dro::make_predictor(4, 2, {6}, nc::Activation::tanh, rng);
    Tensor batch = gaussian_batch(10, 6, rng);
    base::KlDroConfig cfg;
    cfg.eps_kl = 0.3;
    nc::Tape tape;
    tape.backward(base::kl_dro_loss(tape, p, batch, cfg));
    auto a = p.w.grad();
    auto n = numeric_grad(p.w.values(),
                          [&] { return base::kl_dro_value(dro::forecast_losses(p, batch), cfg); });
    errs.emplace_back("kl_dro_loss", rel_error(a, n));
  }
  bool ok = true;
  std::string d;
  for (const auto& [name, e] : errs) {
    ok = ok && e <= 1e-4;
    d += name + "=" + f6(e) + " ";
  }
  return {ok, d};
}

// ---- 5 ---------------------------------------------------------------------------

Outcome generative_sanity() {
  Rng rng(2024);
  Tensor data(2000, 1);
  for (auto& v : data.values()) v = (rng.uniform() < 0.5 ? -2.0 : 2.0) + 0.3 * rng.normal();
  auto m = gen::make_diffusion_model(gen::build_schedule(32, 1e-3, 0.3, 0.1), 1, {64, 64},
                                     nc::Activation::relu, 8, rng);
  gen::train_diffusion(m, data, {2000, 256, 3e-3, 0.02}, rng);
  auto traj = gen::reverse_sample(m, 2000, rng);
  const double w1 = data::wasserstein1(traj.samples(), data);
  double dev = 0.0;
  for (double r : gen::ppo_ratio_values(m, m, traj)) dev = std::max(dev, std::abs(r - 1.0));
  return {w1 <= 0.15 && dev <= 1e-12, "W1=" + f6(w1) + " max|r-1| at theta0=" + f6(dev)};
}

// ---- 6, 7 ------------------------------------------------------------------------

ExperimentConfig desk(std::uint64_t seed) {
  KeyValues kv = KeyValues::load(std::string(GASDRO_SOURCE_DIR) + "/configs/desk.conf");
  for (const auto& a : g_sets) kv.set_assignment(a);
  kv.set("seed", std::to_string(seed));
  return build_config(kv);
}

Outcome table1() {
  std::size_t worst_ok = 0, order_ok = 0;
  std::string d;
  for (auto seed : g_seeds) {
    auto c = desk(seed);
    Layout lay{g_work / "table1" / ("seed" + std::to_string(seed))};
    fs::remove_all(lay.root);
    gen_data(c, lay);
    Bench b = load_bench(c, lay);
    double avg[3], worst[3];
    const Method ms[3] = {Method::erm, Method::dml, Method::gasdro};
    for (int i = 0; i < 3; ++i) {
      auto t = train_method(c, lay, b, ms[i]);
      auto recs = evaluate(c, b, t.predictor, to_string(ms[i]), "acc");
      avg[i] = clean_average(recs);
      worst[i] = clean_worst(recs);
    }
    const bool w = worst[2] <= worst[0];
    const bool o = avg[2] <= avg[1] && avg[1] <= avg[0];
    worst_ok += w;
    order_ok += o;
    char buf[200];
    std::snprintf(buf, sizeof buf, "s%llu avg erm/dml/gas=%.4f/%.4f/%.4f worst erm/gas=%.4f/%.4f; ",
                  static_cast<unsigned long long>(seed), avg[0], avg[1], avg[2], worst[0], worst[2]);
    d += buf;
  }
  const std::size_t n = g_seeds.size();
  d += "worst<=erm " + std::to_string(worst_ok) + "/" + std::to_string(n) + ", gas<=dml<=erm " +
       std::to_string(order_ok) + "/" + std::to_string(n);
  return {worst_ok * 5 >= 4 * n && order_ok * 5 >= 3 * n, d};
}

Outcome budget_sweep() {
  std::size_t interior = 0;
  std::string d;
  for (auto seed : g_seeds) {
    auto c = desk(seed);
    Layout lay{g_work / "sweep" / ("seed" + std::to_string(seed))};
    fs::remove_all(lay.root);
    gen_data(c, lay);
    Bench b = load_bench(c, lay);
    auto pts = run_sweep(c, lay, b, {0.001, 0.005, 0.02, 0.08, 0.3});
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i].average_mse < pts[best].average_mse) best = i;
    const bool in = best != 0 && best + 1 != pts.size();
    interior += in;
    d += "s" + std::to_string(seed) + " [";
    for (std::size_t i = 0; i < pts.size(); ++i) d += (i ? " " : "") + f6(pts[i].average_mse);
    d += "] argmin eps=" + f6(pts[best].eps) + "; ";
  }
  const std::size_t n = g_seeds.size();
  d += "interior " + std::to_string(interior) + "/" + std::to_string(n);
  return {interior * 5 >= 4 * n, d};
}

// ---- 8 ---------------------------------------------------------------------------

Outcome corruptions() {
  bool ok = true;
  std::string d;
  Rng rng(8);
  const std::size_t L = 20;
  data::SequenceDataset ds;
  ds.input_len = 16;
  ds.output_len = 4;
  ds.windows = Tensor(50, L);
  for (auto& v : ds.windows.values()) v = 5.0 + rng.uniform();  // never equal to the fill
  {
    auto out = data::corrupt(ds, data::CorruptionSpec::at_level(data::CorruptionKind::cutout, 0.3), rng);
    const std::size_t want = static_cast<std::size_t>(std::lround(0.3 * L));
    bool cut = true;
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::vector<std::size_t> hit;
      for (std::size_t j = 0; j < L; ++j) {
        if (out.windows(i, j) == 1.0)
          hit.push_back(j);
        else
          cut = cut && out.windows(i, j) == ds.windows(i, j);
      }
      cut = cut && hit.size() == want && hit.back() - hit.front() + 1 == want;
    }
    ok = ok && cut;
    d += std::string("cutout ") + (cut ? "ok" : "bad") + " (" + std::to_string(want) + " of " +
         std::to_string(L) + "); ";
  }
  {
    data::CorruptionSpec spec;
    spec.kind = data::CorruptionKind::perlin;
    spec.octaves = 1;
    double mx = 0.0, off = 0.0;
    for (int t = 0; t < 100; ++t) {
      auto p = data::perlin_noise(L, spec, rng);  // 4 cells over 20 positions: nodes every 5
      for (std::size_t j = 0; j < L; ++j)
        (j % 5 == 0 ? mx : off) = std::max(j % 5 == 0 ? mx : off, std::abs(p[j]));
    }
    ok = ok && mx == 0.0 && off > 0.0;
    d += "perlin max|node|=" + f6(mx) + " max|off-node|=" + f6(off) + "; ";
  }
  {
    bool id = true;
    for (auto k : {data::CorruptionKind::gaussian, data::CorruptionKind::perlin,
                   data::CorruptionKind::cutout})
      id = id && data::corrupt(ds, data::CorruptionSpec::at_level(k, 0.0), rng).windows.values() ==
                     ds.windows.values();
    ok = ok && id;
    d += std::string("zero-intensity identity ") + (id ? "ok" : "bad") + "; ";
  }
  {
    std::size_t good = 0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 5 + rng.below(60);
      auto draw = [&] {
        std::vector<double> v(n);
        const double shift = rng.uniform(-2.0, 2.0);
        for (auto& x : v) x = shift + rng.normal();
        return v;
      };
      auto a = draw(), b = draw(), c = draw();
      const double ab = data::wasserstein1(a, b), ba = data::wasserstein1(b, a);
      const double bc = data::wasserstein1(b, c), ac = data::wasserstein1(a, c);
      const bool p = ab >= 0.0 && ab == ba && data::wasserstein1(a, a) == 0.0 && ac <= ab + bc + 1e-12;
      good += p;
    }
    ok = ok && good == 100;
    d += "W1 pseudometric " + std::to_string(good) + "/100";
  }
  return {ok, d};
}

// ---- 9 ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const std::string conf = std::string(GASDRO_SOURCE_DIR) + "/configs/desk.conf";
  std::vector<fs::path> roots{g_work / "det_a", g_work / "det_b"};
  for (const auto& r : roots) {
    fs::remove_all(r);
    const std::string common = " --config " + conf + " --seed 7 --out " + r.string() +
                               " --set eval.corruptions=gaussian,perlin,cutout --set eval.levels=0.1,0.3";
    for (const std::string sub : {"gen-data", "train --method erm,dml,gasdro",
                                  "eval --method erm,dml,gasdro", "report"}) {
      const std::string cmd = std::string(GASDRO_CLI_PATH) + " " + sub + common + " > " +
                              (r.string() + ".log") + " 2>&1";
      fs::create_directories(r);
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + sub};
    }
  }
  std::size_t files = 0, same = 0;
  // timing.txt holds wall-clock seconds and peak memory, so it is the one file
  // allowed to differ.
  for (const auto& e : fs::recursive_directory_iterator(roots[0])) {
    if (!e.is_regular_file() || e.path().filename() == "timing.txt") continue;
    ++files;
    const auto other = roots[1] / fs::relative(e.path(), roots[0]);
    same += fs::exists(other) && slurp(e.path()) == slurp(other);
  }
  return {files > 0 && same == files, std::to_string(same) + "/" + std::to_string(files) +
                                          " data, checkpoint, diagnostic, metrics and table files identical"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", work, "scratch directory");
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_option("--seeds", g_seeds, "benchmark seeds for criteria 6 and 7")->delimiter(',');
  app.add_option("--set", g_sets, "override a desk.conf key for criteria 6 and 7, key=value");
  CLI11_PARSE(app, argc, argv);
  g_work = fs::absolute(work);
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    const char* name;
    double limit;  // seconds; 0 for none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "dual-descent lemma", 5, dual_lemma},
      {2, "inner-max error probe", 120, theorem1},
      {3, "KL-DRO duality", 10, kl_duality},
      {4, "gradient integrity", 30, gradients},
      {5, "generative sanity", 120, generative_sanity},
      {6, "directional benchmark", 900, table1},
      {7, "budget sweep shape", 1200, budget_sweep},
      {8, "corruption operators", 5, corruptions},
      {9, "end-to-end determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Stopwatch sw;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = sw.seconds();
    const bool in_time = c.limit == 0 || s < c.limit;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %d %s %s: %s [%.1fs%s%s]\n", c.id, pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), s, c.limit > 0 ? " / limit " : "",
                c.limit > 0 ? (f6(c.limit) + "s").c_str() : "");
    std::fflush(stdout);
  }
  return failed;
}
