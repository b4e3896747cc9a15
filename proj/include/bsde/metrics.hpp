#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsde/problems.hpp"
#include "bsde/schemes.hpp"
#include "bsde/sde.hpp"
#include "bsde/train.hpp"

namespace bsde {

// Candidate initial values of the runs entering an ensemble cell.
struct RunT0 {
  double y0 = 0.0;
  std::vector<double> z0;
  bool nc = false;
};

struct T0Errors {
  double eps_y0 = 0.0, sd_y0 = 0.0;
  double eps_z0 = 0.0, sd_z0 = 0.0;
  bool z_available = true;
  bool nc = false;  // any non-convergent run poisons the cell
};

// Mean absolute deviation of Y0 (and componentwise-averaged Z0) across
// runs, with the spread over exactly those runs (population convention;
// set sample_sd for the n-1 denominator).
T0Errors t0_errors(std::span<const RunT0> runs, double ref_y0,
                   const std::optional<std::vector<double>>& ref_z0, bool sample_sd = false);

struct RegressionErrors {
  std::vector<double> times;           // t_i, i = 0..N-1
  std::vector<double> eps_y, sd_y;
  std::vector<double> eps_z, sd_z;
  bool nc = false;
};

// Per-time-step mean absolute errors against the closed form over a fixed
// test batch, averaged across runs.
RegressionErrors regression_errors(std::span<const SchemeModel::Trajectories> runs,
                                   const ProblemSpec& problem, const PathBatch& test_paths,
                                   bool sample_sd = false);

struct LossTrace {
  std::vector<std::size_t> steps;
  std::vector<double> mean, sd;
};

// Pointwise mean/spread of the validation-loss traces; the probe step
// grids must agree across runs.
LossTrace mean_loss(std::span<const TrainRecord> records, bool sample_sd = false);

}  // namespace bsde
