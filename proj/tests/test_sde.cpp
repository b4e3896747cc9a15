#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "bsde/sde.hpp"
#include "helpers.hpp"

using namespace bsde;

namespace {

ProblemSpec constant_coefficients(std::size_t d, double T, double mu, double sigma, double x0) {
  // additive dynamics; driver/terminal are irrelevant for simulation tests
  return example1(d, T, mu, sigma, x0);
}

ProblemSpec gbm1d(double T, double mu, double sigma, double x0) {
  ProblemSpec p;
  p.id = "gbm";
  p.d = 1;
  p.T = T;
  p.x0 = {x0};
  p.mu = [mu](double, const double* x, double* out) { out[0] = mu * x[0]; };
  p.sigma_diagonal = true;
  p.sigma_diag = [sigma](double, const double* x, double* out) { out[0] = sigma * x[0]; };
  p.sigma = [sigma](double, const double* x, double* out) { out[0] = sigma * x[0]; };
  return p;
}

}  // namespace

TEST_CASE("increment batches are deterministic in the seed") {
  TimeGrid grid{1.0, 8};
  BrownianBatch a = sample_increments(99, 16, grid, 3);
  BrownianBatch b = sample_increments(99, 16, grid, 3);
  CHECK(a.dw == b.dw);
  BrownianBatch c = sample_increments(100, 16, grid, 3);
  CHECK(a.dw != c.dw);
}

TEST_CASE("worker split never changes the draws") {
  TimeGrid grid{1.0, 6};
  BrownianBatch a = sample_increments(7, 33, grid, 2, 1);
  BrownianBatch b = sample_increments(7, 33, grid, 2, 3);
  CHECK(a.dw == b.dw);
}

TEST_CASE("increment variance matches dt within one percent") {
  TimeGrid grid{2.0, 4};  // dt = 0.5
  BrownianBatch bb = sample_increments(11, 65536, grid, 4);  // > 1e6 entries
  double mean = 0.0, m2 = 0.0;
  for (double v : bb.dw) mean += v;
  mean /= static_cast<double>(bb.dw.size());
  for (double v : bb.dw) m2 += (v - mean) * (v - mean);
  const double var = m2 / static_cast<double>(bb.dw.size());
  CHECK(std::fabs(var - grid.dt()) / grid.dt() < 0.01);
}

TEST_CASE("adjacent seeds decorrelate") {
  TimeGrid grid{1.0, 16};
  const std::size_t M = 4096;  // 1M+ entries at d=16
  BrownianBatch a = sample_increments(500, M, grid, 16);
  BrownianBatch b = sample_increments(501, M, grid, 16);
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  const double n = static_cast<double>(a.dw.size());
  for (std::size_t i = 0; i < a.dw.size(); ++i) {
    sa += a.dw[i];
    sb += b.dw[i];
    sab += a.dw[i] * b.dw[i];
    saa += a.dw[i] * a.dw[i];
    sbb += b.dw[i] * b.dw[i];
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
  CHECK(std::fabs(corr) < 0.01);
}

TEST_CASE("zero drift and diffusion freeze the path") {
  ProblemSpec p = constant_coefficients(3, 1.0, 0.0, 0.0, 1.5);
  TimeGrid grid{1.0, 10};
  BrownianBatch bb = sample_increments(1, 7, grid, 3);
  PathBatch paths = euler_forward(p, grid, bb);
  for (std::size_t m = 0; m < 7; ++m)
    for (std::size_t i = 0; i <= 10; ++i)
      for (std::size_t k = 0; k < 3; ++k) CHECK(paths.state(m, i)[k] == 1.5);
}

TEST_CASE("additive dynamics are integrated exactly") {
  const double mu = 0.3, sigma = 0.8, x0 = 1.0, T = 2.0;
  ProblemSpec p = constant_coefficients(2, T, mu, sigma, x0);
  TimeGrid grid{T, 32};
  BrownianBatch bb = sample_increments(42, 50, grid, 2);
  PathBatch paths = euler_forward(p, grid, bb);
  for (std::size_t m = 0; m < 50; ++m) {
    for (std::size_t k = 0; k < 2; ++k) {
      double wsum = 0.0;
      for (std::size_t i = 0; i < 32; ++i) wsum += bb.at(m, i, k);
      const double want = x0 + mu * T + sigma * wsum;
      CHECK(std::fabs(paths.state(m, 32)[k] - want) < 1e-12);
    }
  }
}

TEST_CASE("paths are a pure function of (problem, grid, seed)") {
  ProblemSpec p = gbm1d(1.0, 0.05, 0.2, 100.0);
  TimeGrid grid{1.0, 16};
  BrownianBatch bb = sample_increments(3, 40, grid, 1);
  PathBatch a = euler_forward(p, grid, bb, 1);
  PathBatch b = euler_forward(p, grid, bb, 3);
  CHECK(a.x == b.x);
}

TEST_CASE("nested coarsening sums fine increments") {
  TimeGrid fine{1.0, 12};
  BrownianBatch bb = sample_increments(8, 5, fine, 2);
  BrownianBatch coarse = bb.coarsen(3);
  CHECK(coarse.N == 4);
  for (std::size_t m = 0; m < 5; ++m)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k < 2; ++k) {
        const double want = bb.at(m, 3 * i, k) + bb.at(m, 3 * i + 1, k) + bb.at(m, 3 * i + 2, k);
        CHECK(coarse.at(m, i, k) == doctest::Approx(want).epsilon(1e-15));
      }
  CHECK_THROWS_AS(bb.coarsen(5), std::invalid_argument);
}

TEST_CASE("deterministic linear drift converges at first order") {
  // sigma = 0: pure Euler ODE error, slope ~ 1
  ProblemSpec p;
  p.id = "ode";
  p.d = 1;
  p.T = 1.0;
  p.x0 = {1.0};
  p.mu = [](double, const double* x, double* out) { out[0] = 0.7 * x[0]; };
  p.sigma_diagonal = true;
  p.sigma_diag = [](double, const double*, double* out) { out[0] = 0.0; };
  p.sigma = [](double, const double*, double* out) { out[0] = 0.0; };
  ExactTerminal exact = [](const BrownianBatch&, std::size_t) {
    return std::vector<double>{std::exp(0.7)};
  };
  const std::size_t ladder[4] = {8, 16, 32, 64};
  auto pts = strong_error(p, exact, TimeGrid{1.0, 64}, std::span<const std::size_t>(ladder, 4), 4,
                          21);
  const double slope = log_log_slope(pts);
  CHECK(slope > 0.9);
  CHECK(slope < 1.1);
}

TEST_CASE("geometric Brownian motion shows strong order one half") {
  const double mu = 0.06, sigma = 0.4, x0 = 1.0, T = 1.0;
  ProblemSpec p = gbm1d(T, mu, sigma, x0);
  ExactTerminal exact = [&](const BrownianBatch& fine, std::size_t m) {
    double wT = 0.0;
    for (std::size_t i = 0; i < fine.N; ++i) wT += fine.at(m, i, 0);
    return std::vector<double>{x0 * std::exp((mu - 0.5 * sigma * sigma) * T + sigma * wT)};
  };
  const std::size_t ladder[4] = {8, 16, 32, 64};
  auto pts =
      strong_error(p, exact, TimeGrid{T, 64}, std::span<const std::size_t>(ladder, 4), 20000, 77);
  const double slope = log_log_slope(pts);
  CHECK(slope > 0.4);
  CHECK(slope < 0.6);

  // doubling the sample count leaves the slope estimate stable
  auto pts2 =
      strong_error(p, exact, TimeGrid{T, 64}, std::span<const std::size_t>(ladder, 4), 40000, 77);
  CHECK(std::fabs(log_log_slope(pts2) - slope) < 0.05);
}

TEST_CASE("non-finite states abort with diagnostics") {
  ProblemSpec p;
  p.id = "blowup";
  p.d = 1;
  p.T = 1.0;
  p.x0 = {1.0};
  p.mu = [](double, const double* x, double* out) { out[0] = x[0] * x[0] * 1e200; };
  p.sigma_diagonal = true;
  p.sigma_diag = [](double, const double*, double* out) { out[0] = 0.0; };
  p.sigma = [](double, const double*, double* out) { out[0] = 0.0; };
  TimeGrid grid{1.0, 4};
  BrownianBatch bb = sample_increments(1, 2, grid, 1);
  CHECK_THROWS_AS(euler_forward(p, grid, bb), SimulationError);
}

TEST_CASE("path dump round-trips through the binary header") {
  ProblemSpec p = gbm1d(1.0, 0.05, 0.2, 1.0);
  TimeGrid grid{1.0, 5};
  BrownianBatch bb = sample_increments(44, 3, grid, 1);
  PathBatch paths = euler_forward(p, grid, bb);
  const std::string file =
      (std::filesystem::temp_directory_path() / "bsde_paths_test.bin").string();
  write_path_dump(file, paths, 44, p.id);
  PathDump dump = read_path_dump(file);
  CHECK(dump.seed == 44);
  CHECK(dump.problem_id == "gbm");
  CHECK(dump.paths.M == 3);
  CHECK(dump.paths.grid.N == 5);
  CHECK(dump.paths.x == paths.x);
  std::remove(file.c_str());
}
