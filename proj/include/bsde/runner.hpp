#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bsde/config.hpp"
#include "bsde/metrics.hpp"
#include "bsde/schemes.hpp"
#include "bsde/train.hpp"

namespace bsde {

// exit codes shared by all subcommands
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNC = 3;
inline constexpr int kExitRuntime = 4;

struct ExperimentConfig {
  std::string problem_id = "ex1";
  std::size_t d = 1;
  double T = 1.0;
  std::map<std::string, double> problem_kv;
  SchemeConfig scheme;
  std::size_t N = 20;
  TrainConfig train_base;  // seed is filled per run
  std::vector<std::uint64_t> seeds{1};
  std::size_t test_size = 4096;
  std::uint64_t test_seed = 9999;
  std::size_t workers = 1;
  std::string out_dir = "out";
  Config effective;  // resolved key/value view (manifest payload)
};

// Validates and resolves defaults; throws ConfigError naming the offending
// field.
ExperimentConfig experiment_from_config(const Config& cfg);

ProblemSpec build_problem(const ExperimentConfig& cfg);
SchemeModel build_model(const ExperimentConfig& cfg);

struct RunArtifacts {
  std::uint64_t seed = 0;
  TrainRecord record;
  ParameterSet params;
  std::vector<BatchNormState> bn_flat;
  bool nc = false;
  double y0 = 0.0;
  std::vector<double> z0;
  SchemeModel::Trajectories traj;
};

struct EnsembleResult {
  std::vector<RunArtifacts> runs;
  bool any_nc = false;
};

// Trains one run per seed over a worker pool (runs are independent and
// deterministic, so the worker count never changes any output).
EnsembleResult run_ensemble(const ExperimentConfig& cfg, bool with_trajectories,
                            const std::string& checkpoint_dir);

// TrainRecord CSV: rows (step, train_loss, val_loss, lr), val_loss blank
// between probes.
std::string train_record_csv(const TrainRecord& rec);
TrainRecord parse_train_record_csv(const std::string& path);

int cmd_train(const ExperimentConfig& cfg);
int cmd_evaluate(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);
int cmd_simulate(const ExperimentConfig& cfg);
int cmd_check();

}  // namespace bsde
