#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gasdro/app/pipeline.hpp"

using namespace gasdro;
using namespace gasdro::app;
namespace fs = std::filesystem;

namespace {

KeyValues parse(const std::string& text) {
  std::istringstream is(text);
  return KeyValues::parse(is);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gasdro_test_app_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kTiny = R"(
seed = 3
method = erm
data.input_len = 6
data.output_len = 2
data.stride = 2
data.train_length = 120
data.test_length = 60
data.test_families = up, noisy
family.train.frequencies = 0.05
family.train.amplitudes = 1.0
family.up.level = 0.5
family.noisy.noise_std = 0.4
predictor.hidden = 8
train.epochs = 3
train.batch = 16
ddpm.T = 8
ddpm.fine_tuned_steps = 2
ddpm.hidden = 16, 16
ddpm.steps = 40
ddpm.batch = 16
gasdro.K = 2
gasdro.H = 2
gasdro.n = 16
gasdro.inner_samples = 8
gasdro.outer_steps = 2
gasdro.batch = 8
)";

ExperimentConfig tiny(const std::string& extra = "") { return build_config(parse(kTiny + extra)); }

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(GASDRO_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---- key-value parsing ----------------------------------------------------------

TEST(KeyValues, CommentsBlankLinesAndLists) {
  auto kv = parse("# header\n\nseed = 4  # trailing\nsweep.eps = 0.1, 0.2 ,0.3\n");
  EXPECT_EQ(kv.str("seed", ""), "4");
  EXPECT_EQ(kv.nums("sweep.eps", {}), (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_TRUE(kv.unused().empty());
}

TEST(KeyValues, MalformedInputIsConfigError) {
  EXPECT_THROW(parse("seed 4\n"), ConfigError);
  EXPECT_THROW(parse("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse(" = 2\n"), ConfigError);
  auto kv = parse("a = x\nb = -1\nc = maybe\n");
  EXPECT_THROW(kv.num("a", 0.0), ConfigError);
  EXPECT_THROW(kv.count("b", 0), ConfigError);
  EXPECT_THROW(kv.flag("c", false), ConfigError);
}

TEST(KeyValues, CommandLineAssignmentOverrides) {
  auto kv = parse("seed = 1\n");
  kv.set_assignment("seed=9");
  EXPECT_EQ(kv.integer("seed", 0), 9);
  EXPECT_THROW(kv.set_assignment("novalue"), ConfigError);
}

// ---- experiment config ----------------------------------------------------------

TEST(ExperimentConfig, SeedIsMandatory) {
  EXPECT_THROW(build_config(parse("method = erm\n")), ConfigError);
  EXPECT_EQ(build_config(parse("seed = 5\n")).seed, 5u);
}

TEST(ExperimentConfig, UnknownKeysAndValuesRejected) {
  EXPECT_THROW(build_config(parse("seed = 1\ngasdro.epz = 0.1\n")), ConfigError);
  EXPECT_THROW(build_config(parse("seed = 1\nmethod = sgd\n")), ConfigError);
  EXPECT_THROW(build_config(parse("seed = 1\ngenerator = gan\n")), ConfigError);
  EXPECT_THROW(build_config(parse("seed = 1\ngasdro.kappa = 1.5\n")), ConfigError);
  EXPECT_THROW(build_config(parse("seed = 1\ngasdro.budget_mode = loose\n")), ConfigError);
  EXPECT_THROW(build_config(parse("seed = 1\neval.corruptions = gaussian\n")), ConfigError);
  EXPECT_THROW(build_config(parse("seed = 1\ndata.test_families = train\n")), ConfigError);
  // family keys for ids not listed are typos too
  EXPECT_THROW(build_config(parse("seed = 1\nfamily.other.level = 1\n")), ConfigError);
}

TEST(ExperimentConfig, FamiliesInheritTheTrainingFamily) {
  auto c = tiny();
  ASSERT_EQ(c.test_families.size(), 2u);
  EXPECT_EQ(c.test_families[0].id, "up");
  EXPECT_DOUBLE_EQ(c.test_families[0].level, 0.5);
  EXPECT_EQ(c.test_families[0].frequencies, std::vector<double>{0.05});
  EXPECT_DOUBLE_EQ(c.test_families[1].noise_std, 0.4);
  EXPECT_DOUBLE_EQ(c.test_families[1].level, 0.0);
}

TEST(ExperimentConfig, CorruptionGridIsKindsTimesLevels) {
  auto c = tiny("eval.corruptions = gaussian, perlin, cutout\neval.levels = 0.1, 0.2, 0.3, 0.4\n");
  auto g = c.corruption_grid();
  ASSERT_EQ(g.size(), 12u);
  EXPECT_EQ(g[0].kind, data::CorruptionKind::gaussian);
  EXPECT_DOUBLE_EQ(g[11].ratio, 0.4);
  EXPECT_TRUE(tiny().corruption_grid().empty());
}

TEST(ExperimentConfig, MethodList) {
  auto c = tiny("");
  EXPECT_EQ(c.methods, std::vector<Method>{Method::erm});
  auto kv = parse(kTiny);
  kv.set("method", "erm, gasdro");
  EXPECT_EQ(build_config(kv).methods, (std::vector<Method>{Method::erm, Method::gasdro}));
}

TEST(Budget, Modes) {
  GasDroConfig s;
  s.eps = 0.1;
  s.budget_mode = BudgetMode::absolute;
  EXPECT_DOUBLE_EQ(budget_for(s, 50.0), 0.1);
  s.budget_mode = BudgetMode::excess;
  EXPECT_DOUBLE_EQ(budget_for(s, 50.0), 50.1);
  s.budget_mode = BudgetMode::relative;
  EXPECT_DOUBLE_EQ(budget_for(s, 50.0), 55.0);
}

// ---- metrics and tables ---------------------------------------------------------

TEST(Metrics, LineRoundTrip) {
  MetricsRecord r{"erm-s1", "erm", "level", "cutout@0.3", 0.125, 0.5, 17};
  auto back = MetricsRecord::parse(r.line());
  EXPECT_EQ(back.line(), r.line());
  EXPECT_EQ(back.corruption, "cutout@0.3");
  EXPECT_DOUBLE_EQ(back.mse, 0.125);
  EXPECT_THROW(MetricsRecord::parse("run=x method=erm"), IoError);
  EXPECT_THROW(MetricsRecord::parse("run=x method=erm dataset=a corruption=clean mse=-1 w1=0 windows=1"),
               IoError);
}

TEST(Report, SingleCellIsAverageAndWorst) {
  auto t = summarize({{"erm-s1", "erm", "a", "clean", 0.7, 0.1, 3}});
  ASSERT_EQ(t.size(), 1u);
  EXPECT_DOUBLE_EQ(t[0].average(0), 0.7);
  EXPECT_DOUBLE_EQ(t[0].worst(0), 0.7);
  EXPECT_DOUBLE_EQ(t[0].improvement(0), 0.0);
  EXPECT_NE(t[0].csv().find("Average,0.700000"), std::string::npos);
  EXPECT_NE(t[0].csv().find("Worst,0.700000"), std::string::npos);
}

TEST(Report, AggregationMatchesIndependentRecompute) {
  nc::Rng rng(8);
  std::vector<MetricsRecord> recs;
  const std::vector<std::string> methods{"gasdro", "erm", "dml"}, sets{"a", "b", "c", "d"};
  std::map<std::string, std::vector<double>> col;
  for (const auto& m : methods)
    for (const auto& d : sets) {
      const double v = rng.uniform(0.1, 2.0);
      recs.push_back({m + "-s1", m, d, "clean", v, 0.0, 1});
      col[m].push_back(v);
    }
  auto t = summarize(recs).at(0);
  EXPECT_EQ(t.methods.front(), "erm");
  for (std::size_t m = 0; m < t.methods.size(); ++m) {
    const auto& v = col[t.methods[m]];
    double sum = 0.0, mx = 0.0;
    for (double x : v) sum += x, mx = std::max(mx, x);
    EXPECT_EQ(t.average(m), sum / 4.0);
    EXPECT_EQ(t.worst(m), mx);
  }
  const double erm = t.average(0);
  EXPECT_DOUBLE_EQ(t.improvement(1), 100.0 * (erm - t.average(1)) / erm);
}

TEST(Report, MissingOrDuplicateCellsRejected) {
  std::vector<MetricsRecord> recs{{"r", "erm", "a", "clean", 1, 0, 1}, {"r", "dml", "b", "clean", 1, 0, 1}};
  EXPECT_THROW(summarize(recs), IoError);
  recs = {{"r", "erm", "a", "clean", 1, 0, 1}, {"r", "erm", "a", "clean", 2, 0, 1}};
  EXPECT_THROW(summarize(recs), IoError);
  EXPECT_THROW(summarize({}), IoError);
}

// ---- pipeline -------------------------------------------------------------------

TEST(Pipeline, GenDataWritesOneFilePerFamilyAndIsDeterministic) {
  auto c = tiny();
  Layout a{scratch("gen_a")}, b{scratch("gen_b")};
  auto files = gen_data(c, a);
  ASSERT_EQ(files.size(), 3u);
  gen_data(c, b);
  for (const auto& id : {"up", "noisy"}) {
    ASSERT_TRUE(fs::exists(a.test_csv(id)));
    EXPECT_EQ(slurp(a.test_csv(id)), slurp(b.test_csv(id)));
  }
  EXPECT_EQ(slurp(a.train_csv()), slurp(b.train_csv()));

  auto one = tiny("");
  one.test_families.resize(1);
  one.data.test_ids.resize(1);
  EXPECT_EQ(gen_data(one, Layout{scratch("gen_one")}).size(), 2u);
}

TEST(Pipeline, CheckpointRoundTripIsExact) {
  auto c = tiny();
  Checkpoint ck{"erm", initial_predictor(c), {0.25, 1.5}};
  auto path = scratch("ck") / "c.txt";
  write_checkpoint(path, ck);
  auto back = read_checkpoint(path);
  EXPECT_EQ(back.method, "erm");
  EXPECT_EQ(back.predictor.w.values(), ck.predictor.w.values());
  EXPECT_EQ(back.predictor.spec.widths, ck.predictor.spec.widths);
  EXPECT_EQ(back.stats.mean, 0.25);
  EXPECT_THROW(read_checkpoint(scratch("ck2") / "none.txt"), IoError);
}

TEST(Pipeline, ErmTrainEvalReport) {
  auto c = tiny("eval.corruptions = gaussian, perlin, cutout\neval.levels = 0.1, 0.2, 0.3, 0.4\n");
  Layout lay{scratch("erm")};
  gen_data(c, lay);
  Stopwatch sw;
  cmd_train(c, lay, Method::erm);
  EXPECT_LT(sw.seconds(), 10.0);
  for (const char* f : {"checkpoint.txt", "diagnostics.txt", "summary.txt", "timing.txt"})
    EXPECT_TRUE(fs::exists(lay.run_dir("erm") / f)) << f;
  auto recs = cmd_eval(c, lay, Method::erm);
  ASSERT_EQ(recs.size(), 2u * 13u);  // per dataset: clean + 3 kinds x 4 levels
  for (const auto& r : recs) {
    EXPECT_GE(r.mse, 0.0);
    EXPECT_GT(r.shift_w1, 0.0);
  }
  auto tables = cmd_report(lay);
  EXPECT_EQ(tables.size(), 13u);
  EXPECT_TRUE(fs::exists(lay.report_dir() / "mse_clean.csv"));
  EXPECT_TRUE(fs::exists(lay.report_dir() / "mse_cutout_0.3.csv"));
}

TEST(Pipeline, EvalRejectsMismatchedWindows) {
  auto c = tiny();
  Layout lay{scratch("shape")};
  gen_data(c, lay);
  cmd_train(c, lay, Method::erm);
  auto other = tiny("");
  other.data.input_len = 5;
  other.data.output_len = 3;
  EXPECT_THROW(cmd_eval(other, lay, Method::erm), ShapeError);
}

TEST(Pipeline, CorruptionDrawsArePairedAcrossMethods) {
  auto c = tiny("eval.corruptions = gaussian\neval.levels = 0.5\n");
  Layout lay{scratch("paired")};
  gen_data(c, lay);
  Bench b = load_bench(c, lay);
  auto p = initial_predictor(c);
  auto r1 = evaluate(c, b, p, "erm", "x");
  auto r2 = evaluate(c, b, p, "dml", "y");
  ASSERT_EQ(r1.size(), r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) EXPECT_EQ(r1[i].mse, r2[i].mse);
}

TEST(Pipeline, GasDroEmitsDualAndReconstructionPerInnerEpoch) {
  auto c = tiny();
  Layout lay{scratch("gas")};
  gen_data(c, lay);
  Bench b = load_bench(c, lay);
  auto out = train_method(c, lay, b, Method::gasdro);
  std::size_t inner = 0, outer = 0;
  for (const auto& l : out.diagnostics) {
    if (l.find("kind=inner") != std::string::npos) {
      ++inner;
      EXPECT_NE(l.find(" mu="), std::string::npos);
      EXPECT_NE(l.find(" J="), std::string::npos);
    }
    if (l.find("kind=outer") != std::string::npos) ++outer;
  }
  EXPECT_EQ(inner, c.gasdro.K * c.gasdro.H);
  EXPECT_EQ(outer, c.gasdro.H);
  EXPECT_TRUE(fs::exists(lay.model_file(GeneratorKind::ddpm)));
  // second run reuses the cached generator and reproduces the result
  auto again = train_method(c, lay, b, Method::gasdro);
  EXPECT_EQ(again.predictor.w.values(), out.predictor.w.values());
  EXPECT_EQ(again.diagnostics, out.diagnostics);
}

TEST(Pipeline, CachedGeneratorEqualsFreshOne) {
  auto c = tiny();
  Layout lay{scratch("cache")};
  gen_data(c, lay);
  Bench b = load_bench(c, lay);
  auto fresh = ensure_ddpm(c, lay, b.train.windows);
  auto cached = ensure_ddpm(c, lay, b.train.windows);
  EXPECT_EQ(fresh.theta.values(), cached.theta.values());
  auto c2 = c;
  c2.ddpm.steps = 41;
  EXPECT_NE(generator_key(c2, b.train.windows), generator_key(c, b.train.windows));
}

TEST(Pipeline, VaeGeneratorRuns) {
  auto c = tiny("generator = vae\nvae.steps = 30\nvae.hidden = 8\n");
  Layout lay{scratch("vae")};
  gen_data(c, lay);
  Bench b = load_bench(c, lay);
  auto out = train_method(c, lay, b, Method::gasdro);
  for (double v : out.predictor.w.values()) ASSERT_TRUE(std::isfinite(v));
  c.methods = {Method::dml};
  EXPECT_THROW(train_method(c, lay, b, Method::dml), ConfigError);
}

TEST(Pipeline, SweepRowsSortedAndSingleton) {
  auto c = tiny();
  c.gasdro.H = c.gasdro.K = 1;
  Layout lay{scratch("sweep")};
  gen_data(c, lay);
  Bench b = load_bench(c, lay);
  auto pts = run_sweep(c, lay, b, {0.3, 0.01});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_LT(pts[0].eps, pts[1].eps);
  EXPECT_EQ(run_sweep(c, lay, b, {0.05}).size(), 1u);
  EXPECT_THROW(run_sweep(c, lay, b, {}), ConfigError);
}

// ---- command line ---------------------------------------------------------------

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch("cli");
    std::ofstream(dir_ / "tiny.conf") << kTiny;
  }
  std::string base(const std::string& out = "out") const {
    return "--config " + (dir_ / "tiny.conf").string() + " --out " + (dir_ / out).string();
  }
  int run(const std::string& args) { return run_cli(args, dir_ / "log.txt"); }
  std::string log() const { return slurp(dir_ / "log.txt"); }
  fs::path dir_;
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("train " + base() + " --method sgd"), 2);
  EXPECT_NE(log().find("unknown method"), std::string::npos);
  EXPECT_EQ(run("verify --only nonsense"), 2);
  EXPECT_EQ(run("gen-data --out " + (dir_ / "x").string()), 2);  // no seed
  EXPECT_EQ(run("gen-data " + base() + " --set gasdro.kappa=2"), 2);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  EXPECT_EQ(run("eval " + base("empty") + " --method erm"), 1);
  EXPECT_EQ(run("report --out " + (dir_ / "empty").string()), 1);
}

TEST_F(Cli, VerifyOnlyRestrictsScope) {
  EXPECT_EQ(run("verify --only dual-lemma"), 0);
  const auto out = log();
  EXPECT_NE(out.find("probe=dual-lemma"), std::string::npos);
  EXPECT_EQ(out.find("probe=theorem1"), std::string::npos);
}

TEST_F(Cli, FullFlowIsByteIdentical) {
  for (const char* o : {"r1", "r2"}) {
    ASSERT_EQ(run("gen-data " + base(o)), 0) << log();
    ASSERT_EQ(run("train " + base(o) + " --method erm,kldro"), 0) << log();
    ASSERT_EQ(run("eval " + base(o) + " --method erm,kldro"), 0) << log();
    ASSERT_EQ(run("report " + base(o)), 0) << log();
  }
  for (const char* f : {"metrics/erm.txt", "metrics/kldro.txt", "report/mse_clean.csv",
                        "runs/erm/checkpoint.txt", "data/test_up.csv"})
    EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f)) << f;
}

TEST_F(Cli, SeedFlagOverridesConfig) {
  ASSERT_EQ(run("gen-data " + base("s3")), 0);
  ASSERT_EQ(run("gen-data " + base("s4") + " --seed 4"), 0);
  EXPECT_NE(slurp(dir_ / "s3/data/train.csv"), slurp(dir_ / "s4/data/train.csv"));
}
