#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "bsde/rng.hpp"
#include "bsde/tensor.hpp"

namespace testutil {

inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max(1e-12, std::fabs(want));
}

// Central finite difference of a scalar function of a flat vector.
inline double central_diff(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x, std::size_t i, double h = 1e-6) {
  x[i] += h;
  const double up = f(x);
  x[i] -= 2.0 * h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

// Gradient of `expr` (a scalar-valued tensor expression) wrt a single leaf,
// checked against finite differences of the untaped evaluation.
inline void check_grad_against_fd(
    const std::vector<std::size_t>& shape, const std::vector<double>& values,
    const std::function<bsde::Tensor(const bsde::Tensor&)>& expr, double tol = 1e-5,
    double h = 1e-6) {
  bsde::Tape tape;
  bsde::Tensor leaf = tape.leaf(shape, values);
  bsde::Tensor out = expr(leaf);
  bsde::Tensor grad = tape.grad_wrt_input(out, leaf);

  auto eval = [&](const std::vector<double>& v) {
    return expr(bsde::Tensor(shape, v)).value();
  };
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double fd = central_diff(eval, values, i, h);
    const double got = grad.at(i);
    if (std::fabs(fd) < 1e-7) {
      REQUIRE(std::fabs(got - fd) < tol);
    } else {
      REQUIRE(rel_err(got, fd) < tol);
    }
  }
}

inline std::vector<double> random_vector(bsde::CounterStream& rng, std::size_t n, double lo = -2.0,
                                         double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace testutil
