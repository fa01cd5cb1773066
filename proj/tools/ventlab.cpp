#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <omp.h>

#include "ventlab/error.hpp"
#include "ventlab/io.hpp"
#include "ventlab/pipeline.hpp"

using namespace ventlab;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON); defaults apply when omitted");
  cmd->add_option("--out", c.out, "Output directory (overrides VENTLAB_OUT and the config)");
  cmd->add_option("--seed", c.seed, "Master seed override");
  cmd->add_option("--jobs", c.jobs, "Worker threads (0 keeps the OpenMP default)")->check(CLI::NonNegativeNumber);
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? run_config_from_json(nlohmann::json::object()) : load_run_config(c.config);
  if (const char* env = std::getenv("VENTLAB_OUT"); env && *env) cfg.output_dir = env;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs > 0) omp_set_num_threads(c.jobs);
  cfg.validate();
  return cfg;
}

void report(const Manifest& m) {
  for (const auto& [path, hash] : m.outputs) std::printf("%s  %s\n", hash.c_str(), path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline ventilation RL pipeline"};
  app.require_subcommand(1);

  Common common;
  int n = -1;
  std::string baseline = "tcql";
  std::string policy;

  auto* spawn = app.add_subcommand("spawn-cohort", "Sample the digital-twin cohort");
  add_common(spawn, common);
  spawn->add_option("--n", n, "Number of twins (overrides cohort.n)")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Roll the scripted clinician and build the offline dataset");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "Train T-CQL or a baseline for every configured run");
  add_common(train, common);
  train->add_option("--baseline", baseline, "ddqn, cql or bcq (T-CQL when omitted)")
      ->check(CLI::IsMember({"tcql", "ddqn", "cql", "cql_fixed", "bcq"}));

  auto* fqe = app.add_subcommand("eval-fqe", "Fitted Q evaluation and OOD value diagnostic");
  add_common(fqe, common);
  fqe->add_option("--policy", policy, "Method name, 'clinician' or a checkpoint path")->required();

  auto* online = app.add_subcommand("eval-online", "Closed-loop rollouts on the cohort");
  add_common(online, common);
  online->add_option("--policy", policy, "Method name, 'clinician' or a checkpoint path")->required();

  auto* rep = app.add_subcommand("report", "Merge evaluation reports into comparison.csv");
  add_common(rep, common);

  auto* all = app.add_subcommand("run-all", "Every stage for T-CQL, the baselines and the clinician");
  add_common(all, common);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve(common);
    if (spawn->parsed()) {
      if (n > 0) cfg.cohort.n = n;
      report(run_spawn_cohort(cfg));
    } else if (gen->parsed()) {
      report(run_gen_data(cfg));
    } else if (train->parsed()) {
      report(run_train(cfg, parse_method(baseline)));
    } else if (fqe->parsed()) {
      report(run_eval_fqe(cfg, policy));
    } else if (online->parsed()) {
      report(run_eval_online(cfg, policy));
    } else if (rep->parsed()) {
      report(run_report(cfg));
    } else if (all->parsed()) {
      run_spawn_cohort(cfg);
      run_gen_data(cfg);
      for (auto k : {MethodKind::tcql, MethodKind::ddqn, MethodKind::cql_fixed, MethodKind::bcq}) {
        std::fprintf(stderr, "train %s\n", to_string(k).c_str());
        run_train(cfg, k);
      }
      for (const char* p : {"tcql", "ddqn", "cql_fixed", "bcq", "clinician"}) {
        std::fprintf(stderr, "evaluate %s\n", p);
        run_eval_fqe(cfg, p);
        run_eval_online(cfg, p);
      }
      report(run_report(cfg));
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
