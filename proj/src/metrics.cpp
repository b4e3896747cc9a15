#include "bsde/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace bsde {

namespace {

std::pair<double, double> mean_sd(std::span<const double> xs, bool sample_sd) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double denom = sample_sd ? std::max(1.0, n - 1.0) : n;
  return {mean, std::sqrt(ss / denom)};
}

}  // namespace

T0Errors t0_errors(std::span<const RunT0> runs, double ref_y0,
                   const std::optional<std::vector<double>>& ref_z0, bool sample_sd) {
  if (runs.empty()) throw std::invalid_argument("t0_errors: empty ensemble");
  T0Errors out;
  out.z_available = ref_z0.has_value();
  std::vector<double> ey, ez;
  for (const RunT0& r : runs) {
    if (r.nc) {
      out.nc = true;
      return out;
    }
    ey.push_back(std::fabs(ref_y0 - r.y0));
    if (ref_z0) {
      const std::size_t d = ref_z0->size();
      if (r.z0.size() != d)
        throw std::invalid_argument("t0_errors: Z0 dimension mismatch");
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += std::fabs((*ref_z0)[j] - r.z0[j]);
      ez.push_back(acc / static_cast<double>(d));
    }
  }
  std::tie(out.eps_y0, out.sd_y0) = mean_sd(ey, sample_sd);
  if (ref_z0) std::tie(out.eps_z0, out.sd_z0) = mean_sd(ez, sample_sd);
  return out;
}

RegressionErrors regression_errors(std::span<const SchemeModel::Trajectories> runs,
                                   const ProblemSpec& problem, const PathBatch& test_paths,
                                   bool sample_sd) {
  if (runs.empty()) throw std::invalid_argument("regression_errors: empty ensemble");
  if (!problem.has_analytic)
    throw std::invalid_argument("regression_errors: problem " + problem.id +
                                " has no analytic solution");
  const std::size_t N = test_paths.grid.N, M = test_paths.M, d = test_paths.d;
  RegressionErrors out;
  for (const auto& run : runs) {
    if (!run.finite) {
      out.nc = true;
      return out;
    }
    if (run.y.size() < N || run.z.size() < N)
      throw std::invalid_argument("regression_errors: trajectories shorter than the grid");
  }

  std::vector<double> zbuf(d);
  for (std::size_t i = 0; i < N; ++i) {
    const double t = test_paths.grid.t(i);
    // exact values on the shared test batch
    std::vector<double> y_exact(M);
    std::vector<double> z_exact(M * d);
    for (std::size_t m = 0; m < M; ++m) {
      const double* x = test_paths.state(m, i);
      y_exact[m] = problem.analytic_y(t, x);
      problem.analytic_z(t, x, zbuf.data());
      for (std::size_t k = 0; k < d; ++k) z_exact[m * d + k] = zbuf[k];
    }
    std::vector<double> ey, ez;
    for (const auto& run : runs) {
      double acc_y = 0.0, acc_z = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        acc_y += std::fabs(y_exact[m] - run.y[i][m]);
        for (std::size_t k = 0; k < d; ++k)
          acc_z += std::fabs(z_exact[m * d + k] - run.z[i][m * d + k]);
      }
      ey.push_back(acc_y / static_cast<double>(M));
      ez.push_back(acc_z / static_cast<double>(M * d));
    }
    auto [my, sy] = mean_sd(ey, sample_sd);
    auto [mz, sz] = mean_sd(ez, sample_sd);
    out.times.push_back(t);
    out.eps_y.push_back(my);
    out.sd_y.push_back(sy);
    out.eps_z.push_back(mz);
    out.sd_z.push_back(sz);
  }
  return out;
}

LossTrace mean_loss(std::span<const TrainRecord> records, bool sample_sd) {
  if (records.empty()) throw std::invalid_argument("mean_loss: empty ensemble");
  const auto& first = records.front().val_loss;
  for (const TrainRecord& r : records) {
    if (r.val_loss.size() != first.size())
      throw std::invalid_argument("mean_loss: validation traces are misaligned");
    for (std::size_t i = 0; i < first.size(); ++i)
      if (r.val_loss[i].first != first[i].first)
        throw std::invalid_argument("mean_loss: validation traces are misaligned");
  }
  LossTrace out;
  for (std::size_t i = 0; i < first.size(); ++i) {
    std::vector<double> vals;
    vals.reserve(records.size());
    for (const TrainRecord& r : records) vals.push_back(r.val_loss[i].second);
    auto [m, s] = mean_sd(vals, sample_sd);
    out.steps.push_back(first[i].first);
    out.mean.push_back(m);
    out.sd.push_back(s);
  }
  return out;
}

}  // namespace bsde
