#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsde/tensor.hpp"

namespace bsde {

// A decoupled FBSDE: forward dynamics (mu, sigma), driver f, terminal g,
// and the closed-form solution pair (Y, Z) when one exists. Dynamics run
// on plain arrays (the forward SDE carries no trainable parameters); the
// driver and terminal act on batch tensors so losses can record them.
struct ProblemSpec {
  std::string id;
  std::size_t d = 1;
  double T = 1.0;
  std::vector<double> x0;

  std::function<void(double t, const double* x, double* mu_out)> mu;
  bool sigma_diagonal = true;
  std::function<void(double t, const double* x, double* diag_out)> sigma_diag;
  std::function<void(double t, const double* x, double* mat_out)> sigma;  // row-major d*d

  // x: constant {M,d} states; y: {M,1}; z: {M,d}; result {M,1}
  std::function<Tensor(double t, const Tensor& x, const Tensor& y, const Tensor& z)> driver;
  std::function<Tensor(const Tensor& x)> terminal;  // {M,d} -> {M,1}

  bool has_analytic = false;
  std::function<double(double t, const double* x)> analytic_y;
  std::function<void(double t, const double* x, double* z_out)> analytic_z;  // 1 x d

  std::optional<double> reference_y0;
  std::string reference_note;
};

// Example 1: additive dynamics with a trigonometric solution; the driver
// couples Y and the component sum of Z quadratically.
ProblemSpec example1(std::size_t d, double T, double mu, double sigma, double x0);

// Example 2: X = W; quadratic-in-Z driver built from psi(t,w) =
// sin((T-t+|w|^2)^alpha) with the (d/dt + Laplacian/2) term in closed form.
ProblemSpec example2(std::size_t d, double T, double alpha);

// Example 3: Black-Scholes-Barenblatt with s0 = (1, 0.5, 1, 0.5, ...).
ProblemSpec example3(std::size_t d, double T, double r, double sigma_bs);

// Example 4: option pricing with different borrowing/lending rates; no
// closed form, the attached reference value stands in for Y_0.
ProblemSpec example4(std::size_t d, double T, double mu, double sigma, double rate_lend,
                     double rate_borrow, double strike1, double strike2, double s0);

// Closed-form (Y, Z) at (t, x); throws when the problem has none.
std::pair<double, std::vector<double>> analytic_solution(const ProblemSpec& p, double t,
                                                         std::span<const double> x);

// Diagonal diffusion entries stacked over a batch: {M,d} constant tensor.
Tensor sigma_diag_batch(const ProblemSpec& p, double t, const Tensor& x);

// Problem selection by id ("ex1".."ex4") with numeric parameter overrides
// (keys: ex1 mu/sigma/x0; ex2 alpha; ex3 r/sigma; ex4 mu/sigma/rl/rb/k1/k2/s0).
ProblemSpec make_problem(const std::string& id, std::size_t d, double T,
                         const std::map<std::string, double>& overrides = {});
double default_horizon(const std::string& id);

}  // namespace bsde
