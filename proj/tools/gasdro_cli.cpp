// gasdro: data generation, training, evaluation, budget sweeps, theory probes
// and report tables for the generative-ambiguity DRO library.
//
// Exit codes: 0 success, 1 verification failure or runtime error, 2 usage or
// configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "gasdro/app/pipeline.hpp"

using namespace gasdro;
using namespace gasdro::app;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  long long seed = -1;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "config file (key = value lines)");
  sub->add_option("-o,--out", c.out, "output directory")->capture_default_str();
  sub->add_option("-s,--seed", c.seed, "run seed; overrides the config's seed key");
  sub->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
}

KeyValues gather(const Common& c) {
  KeyValues kv = c.config.empty() ? KeyValues{} : KeyValues::load(c.config);
  for (const auto& s : c.sets) kv.set_assignment(s);
  if (c.seed >= 0) kv.set("seed", std::to_string(c.seed));
  return kv;
}

std::vector<Method> methods_from(const ExperimentConfig& cfg, const std::string& flag) {
  if (flag.empty()) return cfg.methods;
  std::vector<Method> out;
  for (const auto& m : KeyValues::split(flag)) out.push_back(parse_method(m));
  if (out.empty()) throw ConfigError("--method: empty list");
  return out;
}

void print_summary(const TrainOutcome& t) {
  std::string line;
  for (const auto& [k, v] : t.summary) line += (line.empty() ? "" : " ") + k + "=" + v;
  std::cout << line << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributionally robust forecasting with generative ambiguity sets"};
  app.require_subcommand(1);
  Common common;
  std::string method_flag, eps_flag, only_flag;

  auto* gen_cmd = app.add_subcommand("gen-data", "write the training series and the OOD test series");
  auto* train_cmd = app.add_subcommand("train", "train one or more methods");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate trained methods on every OOD set");
  auto* sweep_cmd = app.add_subcommand("sweep-eps", "average OOD MSE of gasdro across budgets");
  auto* verify_cmd = app.add_subcommand("verify", "run the theory probes");
  auto* report_cmd = app.add_subcommand("report", "summary tables from the metrics files");
  for (auto* s : {gen_cmd, train_cmd, eval_cmd, sweep_cmd, verify_cmd, report_cmd}) add_common(s, common);
  for (auto* s : {train_cmd, eval_cmd})
    s->add_option("-m,--method", method_flag, "comma separated methods; defaults to the config's");
  sweep_cmd->add_option("--eps", eps_flag, "comma separated budgets; defaults to sweep.eps");
  verify_cmd->add_option("--only", only_flag,
                         "comma separated probes: dual-lemma, theorem1, theorem2, toy-identities");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const Layout lay{common.out};
    if (verify_cmd->parsed()) {
      KeyValues kv = gather(common);
      std::uint64_t seed = 2024;
      if (kv.has("seed")) seed = static_cast<std::uint64_t>(build_config(kv).seed);
      auto reps = cmd_verify(seed, KeyValues::split(only_flag), std::cout);
      bool ok = true;
      for (const auto& r : reps) ok = ok && r.passed();
      std::cout << (ok ? "verify: all probes passed\n" : "verify: FAILED\n");
      return ok ? 0 : 1;
    }
    if (report_cmd->parsed()) {
      for (const auto& t : cmd_report(lay)) {
        std::cout << "# " << t.corruption << '\n' << t.csv();
      }
      return 0;
    }

    const ExperimentConfig cfg = build_config(gather(common));
    if (gen_cmd->parsed()) {
      for (const auto& p : gen_data(cfg, lay)) std::cout << "wrote " << p.string() << '\n';
    } else if (train_cmd->parsed()) {
      for (Method m : methods_from(cfg, method_flag)) print_summary(cmd_train(cfg, lay, m));
    } else if (eval_cmd->parsed()) {
      for (Method m : methods_from(cfg, method_flag)) {
        auto recs = cmd_eval(cfg, lay, m);
        std::printf("method=%s average_mse=%.6f worst_mse=%.6f records=%zu\n", to_string(m),
                    clean_average(recs), clean_worst(recs), recs.size());
      }
    } else if (sweep_cmd->parsed()) {
      std::vector<double> eps = cfg.sweep_eps;
      if (!eps_flag.empty()) {
        KeyValues kv;
        kv.set("eps", eps_flag);
        eps = kv.nums("eps", {});
      }
      for (const auto& p : cmd_sweep_eps(cfg, lay, eps))
        std::printf("eps=%g average_mse=%.6f worst_mse=%.6f\n", p.eps, p.average_mse, p.worst_mse);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
