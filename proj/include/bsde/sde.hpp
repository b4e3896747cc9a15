#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bsde/problems.hpp"
#include "bsde/tensor.hpp"

namespace bsde {

struct TimeGrid {
  double T = 1.0;
  std::size_t N = 1;
  double dt() const { return T / static_cast<double>(N); }
  double t(std::size_t i) const { return T * static_cast<double>(i) / static_cast<double>(N); }
};

// M x N x d Brownian increments. Every entry is a pure function of
// (seed, sample, step, component) through the counter generator, so the
// batch is identical under any worker split.
struct BrownianBatch {
  std::size_t M = 0, N = 0, d = 0;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<double> dw;

  double at(std::size_t m, std::size_t i, std::size_t k) const {
    return dw[(m * N + i) * d + k];
  }
  const double* step(std::size_t m, std::size_t i) const { return dw.data() + (m * N + i) * d; }
  // constant {M,d} tensor of the increments at step i
  Tensor step_tensor(std::size_t i) const;
  // sum consecutive groups of `factor` increments (nested-grid coupling)
  BrownianBatch coarsen(std::size_t factor) const;
};

BrownianBatch sample_increments(std::uint64_t seed, std::size_t M, const TimeGrid& grid,
                                std::size_t d, std::size_t workers = 1);

// M x (N+1) x d forward states, X[:,0,:] = x0.
struct PathBatch {
  TimeGrid grid;
  std::size_t M = 0, d = 0;
  std::vector<double> x;

  const double* state(std::size_t m, std::size_t i) const {
    return x.data() + (m * (grid.N + 1) + i) * d;
  }
  Tensor states_tensor(std::size_t i) const;  // constant {M,d}
};

struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Euler-Maruyama forward pass; throws SimulationError naming the first
// non-finite (sample, step). Not recorded on any tape.
PathBatch euler_forward(const ProblemSpec& problem, const TimeGrid& grid,
                        const BrownianBatch& brownian, std::size_t workers = 1);

struct StrongErrorPoint {
  double dt;
  double error;  // Monte-Carlo estimate of E |X_T - exact|
};

// Exact terminal state for one sample given its fine-grid increments.
using ExactTerminal =
    std::function<std::vector<double>(const BrownianBatch& fine, std::size_t m)>;

// Errors over a ladder of nested grids (each N must divide finest.N),
// coupled through shared fine-grid draws.
std::vector<StrongErrorPoint> strong_error(const ProblemSpec& problem,
                                           const ExactTerminal& exact, const TimeGrid& finest,
                                           std::span<const std::size_t> ladder, std::size_t M,
                                           std::uint64_t seed);

// least-squares slope of log(error) against log(dt)
double log_log_slope(std::span<const StrongErrorPoint> points);

// Debug/interchange dump: header (M, N, d, seed, problem id) + states.
void write_path_dump(const std::string& path, const PathBatch& paths, std::uint64_t seed,
                     const std::string& problem_id);
struct PathDump {
  PathBatch paths;
  std::uint64_t seed;
  std::string problem_id;
};
PathDump read_path_dump(const std::string& path);

}  // namespace bsde
