#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsde/config.hpp"
#include "bsde/runner.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::string scheme;
  std::string problem;
  int dim = 0;
  int steps = 0;      // grid N
  int iters = 0;      // optimization steps
  int batch = 0;
  int workers = 0;
};

void add_common(CLI::App* app, CommonFlags& flags) {
  app->add_option("--config", flags.config_path, "experiment config file");
  app->add_option("--out", flags.out_dir, "output directory");
  app->add_option("--seed", flags.seeds, "run seed (repeatable)");
  app->add_option("--scheme", flags.scheme, "dbsde|ldbsde|ladbsde");
  app->add_option("--problem", flags.problem, "ex1|ex2|ex3|ex4");
  app->add_option("--dim", flags.dim, "problem dimension d");
  app->add_option("--steps", flags.steps, "time steps N");
  app->add_option("--iters", flags.iters, "optimization steps");
  app->add_option("--batch", flags.batch, "mini-batch size M");
  app->add_option("--workers", flags.workers, "worker threads");
}

// flags override file values
bsde::Config resolve(const CommonFlags& flags) {
  bsde::Config cfg;
  if (!flags.config_path.empty()) cfg = bsde::Config::parse_file(flags.config_path);
  if (!flags.out_dir.empty()) cfg.set("output.dir", "\"" + flags.out_dir + "\"");
  if (!flags.scheme.empty()) cfg.set("scheme.kind", "\"" + flags.scheme + "\"");
  if (!flags.problem.empty()) cfg.set("problem.id", "\"" + flags.problem + "\"");
  if (flags.dim != 0) cfg.set("problem.d", std::to_string(flags.dim));
  if (flags.steps != 0) cfg.set("grid.N", std::to_string(flags.steps));
  if (flags.iters != 0) cfg.set("train.max_steps", std::to_string(flags.iters));
  if (flags.batch != 0) cfg.set("train.batch", std::to_string(flags.batch));
  if (flags.workers != 0) cfg.set("run.workers", std::to_string(flags.workers));
  if (!flags.seeds.empty()) {
    std::string list = "[";
    for (std::size_t i = 0; i < flags.seeds.size(); ++i)
      list += (i ? ", " : "") + std::to_string(flags.seeds[i]);
    cfg.set("train.seeds", list + "]");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward deep-learning solvers for decoupled FBSDEs"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, sweep_flags, sim_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train an ensemble of runs");
  add_common(train_cmd, train_flags);
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "error reports from checkpoints");
  add_common(eval_cmd, eval_flags);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train/evaluate over N, d, scheme axes");
  add_common(sweep_cmd, sweep_flags);
  CLI::App* sim_cmd = app.add_subcommand("simulate", "dump forward paths");
  add_common(sim_cmd, sim_flags);
  app.add_subcommand("check", "run the built-in invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("check")) return bsde::cmd_check();
    const CommonFlags& flags = app.got_subcommand("train")      ? train_flags
                               : app.got_subcommand("evaluate") ? eval_flags
                               : app.got_subcommand("sweep")    ? sweep_flags
                                                                : sim_flags;
    bsde::ExperimentConfig cfg = bsde::experiment_from_config(resolve(flags));
    if (app.got_subcommand("train")) return bsde::cmd_train(cfg);
    if (app.got_subcommand("evaluate")) return bsde::cmd_evaluate(cfg);
    if (app.got_subcommand("sweep")) return bsde::cmd_sweep(cfg);
    return bsde::cmd_simulate(cfg);
  } catch (const bsde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return bsde::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bsde::kExitRuntime;
  }
}
