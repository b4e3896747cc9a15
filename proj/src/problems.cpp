#include "bsde/problems.hpp"

#include <cmath>
#include <stdexcept>

namespace bsde {

namespace {

double get(const std::map<std::string, double>& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

Tensor row_sums(const Tensor& z) {
  return matmul(z, Tensor::ones({z.cols(), 1}));
}

// per-row scalar function of the state, as an {M,1} constant tensor
template <typename F>
Tensor rowwise(const Tensor& x, F&& f) {
  const std::size_t m = x.rows(), d = x.cols();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = f(x.data() + i * d, d);
  return Tensor({m, 1}, std::move(out));
}

void diagonal_to_matrix(const double* diag, std::size_t d, double* mat) {
  for (std::size_t i = 0; i < d * d; ++i) mat[i] = 0.0;
  for (std::size_t i = 0; i < d; ++i) mat[i * d + i] = diag[i];
}

}  // namespace

Tensor sigma_diag_batch(const ProblemSpec& p, double t, const Tensor& x) {
  if (!p.sigma_diagonal)
    throw std::invalid_argument("sigma_diag_batch: diffusion of " + p.id + " is not diagonal");
  const std::size_t m = x.rows(), d = x.cols();
  std::vector<double> out(m * d);
  for (std::size_t i = 0; i < m; ++i) p.sigma_diag(t, x.data() + i * d, out.data() + i * d);
  return Tensor({m, d}, std::move(out));
}

ProblemSpec example1(std::size_t d, double T, double mu, double sigma, double x0) {
  ProblemSpec p;
  p.id = "ex1";
  p.d = d;
  p.T = T;
  p.x0.assign(d, x0);
  p.mu = [mu, d](double, const double*, double* out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = mu;
  };
  p.sigma_diagonal = true;
  p.sigma_diag = [sigma, d](double, const double*, double* out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = sigma;
  };
  p.sigma = [sigma, d](double, const double*, double* out) {
    std::vector<double> diag(d, sigma);
    diagonal_to_matrix(diag.data(), d, out);
  };

  const double dd = static_cast<double>(d);
  p.driver = [T, dd](double t, const Tensor& x, const Tensor& y, const Tensor& z) {
    Tensor known = rowwise(x, [T, t](const double* row, std::size_t n) {
      double xbar = 0.0;
      for (std::size_t i = 0; i < n; ++i) xbar += row[i];
      const double e_half = std::exp(0.5 * (T - t));
      const double e_full = std::exp(T - t);
      const double s = std::sin(xbar), c = std::cos(xbar);
      const double prod = s * c * e_full;
      return (c + 0.2 * s) * e_half - 0.5 * prod * prod;
    });
    // quadratic coupling; the 1/d normalization keeps the closed-form pair
    // an exact solution for every dimension (checked by the residual tests)
    Tensor q = mul(y, row_sums(z));
    return add(known, scale(square(q), 0.5 / dd));
  };
  p.terminal = [](const Tensor& x) {
    return rowwise(x, [](const double* row, std::size_t n) {
      double xbar = 0.0;
      for (std::size_t i = 0; i < n; ++i) xbar += row[i];
      return std::cos(xbar);
    });
  };

  p.has_analytic = true;
  p.analytic_y = [T, d](double t, const double* x) {
    double xbar = 0.0;
    for (std::size_t i = 0; i < d; ++i) xbar += x[i];
    return std::exp(0.5 * (T - t)) * std::cos(xbar);
  };
  p.analytic_z = [T, d, sigma](double t, const double* x, double* z) {
    double xbar = 0.0;
    for (std::size_t i = 0; i < d; ++i) xbar += x[i];
    const double v = -sigma * std::exp(0.5 * (T - t)) * std::sin(xbar);
    for (std::size_t i = 0; i < d; ++i) z[i] = v;
  };
  return p;
}

ProblemSpec example2(std::size_t d, double T, double alpha) {
  ProblemSpec p;
  p.id = "ex2";
  p.d = d;
  p.T = T;
  p.x0.assign(d, 0.0);
  p.mu = [d](double, const double*, double* out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
  };
  p.sigma_diagonal = true;
  p.sigma_diag = [d](double, const double*, double* out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = 1.0;
  };
  p.sigma = [d](double, const double*, double* out) {
    std::vector<double> diag(d, 1.0);
    diagonal_to_matrix(diag.data(), d, out);
  };

  // psi(t,w) = sin(u^alpha), u = T - t + |w|^2.
  //   grad psi   = 2 alpha w u^(alpha-1) cos(u^alpha)
  //   (d/dt + Lap/2) psi
  //     = alpha (d-1) u^(alpha-1) cos(u^alpha)
  //       + 2 alpha |w|^2 ((alpha-1) u^(alpha-2) cos(u^alpha)
  //                        - alpha u^(2 alpha-2) sin(u^alpha))
  auto heat_and_gradsq = [T, alpha](double t, const double* w, std::size_t n) {
    double ww = 0.0;
    for (std::size_t i = 0; i < n; ++i) ww += w[i] * w[i];
    const double u = T - t + ww;
    const double ua1 = std::pow(u, alpha - 1.0);
    const double ua2 = std::pow(u, alpha - 2.0);
    const double v = std::pow(u, alpha);
    const double cv = std::cos(v), sv = std::sin(v);
    const double dd = static_cast<double>(n);
    const double heat = alpha * (dd - 1.0) * ua1 * cv +
                        2.0 * alpha * ww * ((alpha - 1.0) * ua2 * cv - alpha * ua1 * ua1 * sv);
    const double g = 2.0 * alpha * ua1 * cv;
    const double gradsq = g * g * ww;
    return std::pair<double, double>(heat, gradsq);
  };

  p.driver = [heat_and_gradsq](double t, const Tensor& x, const Tensor&, const Tensor& z) {
    Tensor known = rowwise(x, [&](const double* row, std::size_t n) {
      auto [heat, gradsq] = heat_and_gradsq(t, row, n);
      return -(gradsq + heat);
    });
    return add(row_sums(square(z)), known);
  };
  p.terminal = [alpha](const Tensor& x) {
    return rowwise(x, [alpha](const double* row, std::size_t n) {
      double ww = 0.0;
      for (std::size_t i = 0; i < n; ++i) ww += row[i] * row[i];
      return std::sin(std::pow(ww, alpha));
    });
  };

  p.has_analytic = true;
  p.analytic_y = [T, alpha, d](double t, const double* w) {
    double ww = 0.0;
    for (std::size_t i = 0; i < d; ++i) ww += w[i] * w[i];
    return std::sin(std::pow(T - t + ww, alpha));
  };
  p.analytic_z = [T, alpha, d](double t, const double* w, double* z) {
    double ww = 0.0;
    for (std::size_t i = 0; i < d; ++i) ww += w[i] * w[i];
    const double u = T - t + ww;
    const double factor = 2.0 * alpha * std::cos(std::pow(u, alpha)) * std::pow(u, alpha - 1.0);
    for (std::size_t i = 0; i < d; ++i) z[i] = factor * w[i];
  };
  return p;
}

ProblemSpec example3(std::size_t d, double T, double r, double sigma_bs) {
  ProblemSpec p;
  p.id = "ex3";
  p.d = d;
  p.T = T;
  p.x0.resize(d);
  for (std::size_t i = 0; i < d; ++i) p.x0[i] = (i % 2 == 0) ? 1.0 : 0.5;
  p.mu = [d](double, const double*, double* out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
  };
  p.sigma_diagonal = true;
  p.sigma_diag = [sigma_bs, d](double, const double* x, double* out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = sigma_bs * x[i];
  };
  p.sigma = [sigma_bs, d](double, const double* x, double* out) {
    std::vector<double> diag(d);
    for (std::size_t i = 0; i < d; ++i) diag[i] = sigma_bs * x[i];
    diagonal_to_matrix(diag.data(), d, out);
  };

  // the scalar 1/sigma Z term reads as the component sum of Z over sigma
  p.driver = [r, sigma_bs](double, const Tensor&, const Tensor& y, const Tensor& z) {
    return scale(sub(y, scale(row_sums(z), 1.0 / sigma_bs)), -r);
  };
  p.terminal = [](const Tensor& x) {
    return rowwise(x, [](const double* row, std::size_t n) {
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) ss += row[i] * row[i];
      return ss;
    });
  };

  p.has_analytic = true;
  p.analytic_y = [T, r, sigma_bs, d](double t, const double* s) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) ss += s[i] * s[i];
    return std::exp((r + sigma_bs * sigma_bs) * (T - t)) * ss;
  };
  p.analytic_z = [T, r, sigma_bs, d](double t, const double* s, double* z) {
    const double e = std::exp((r + sigma_bs * sigma_bs) * (T - t));
    for (std::size_t i = 0; i < d; ++i) z[i] = 2.0 * sigma_bs * e * s[i] * s[i];
  };
  return p;
}

ProblemSpec example4(std::size_t d, double T, double mu, double sigma, double rate_lend,
                     double rate_borrow, double strike1, double strike2, double s0) {
  ProblemSpec p;
  p.id = "ex4";
  p.d = d;
  p.T = T;
  p.x0.assign(d, s0);
  p.mu = [mu, d](double, const double* x, double* out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = mu * x[i];
  };
  p.sigma_diagonal = true;
  p.sigma_diag = [sigma, d](double, const double* x, double* out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = sigma * x[i];
  };
  p.sigma = [sigma, d](double, const double* x, double* out) {
    std::vector<double> diag(d);
    for (std::size_t i = 0; i < d; ++i) diag[i] = sigma * x[i];
    diagonal_to_matrix(diag.data(), d, out);
  };

  p.driver = [mu, sigma, rate_lend, rate_borrow](double, const Tensor&, const Tensor& y,
                                                 const Tensor& z) {
    Tensor zbar = row_sums(z);
    Tensor lending = add(scale(y, -rate_lend), scale(zbar, -(mu - rate_lend) / sigma));
    Tensor spread = relu(sub(scale(zbar, 1.0 / sigma), y));
    return add(lending, scale(spread, rate_borrow - rate_lend));
  };
  p.terminal = [strike1, strike2](const Tensor& x) {
    return rowwise(x, [strike1, strike2](const double* row, std::size_t n) {
      double mx = row[0];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
      return std::max(mx - strike1, 0.0) - 2.0 * std::max(mx - strike2, 0.0);
    });
  };

  p.has_analytic = false;
  p.reference_y0 = 21.2988;
  p.reference_note = "multilevel Monte Carlo with 7 Picard iterations";
  return p;
}

std::pair<double, std::vector<double>> analytic_solution(const ProblemSpec& p, double t,
                                                         std::span<const double> x) {
  if (!p.has_analytic)
    throw std::runtime_error("no analytic solution for problem " + p.id);
  if (x.size() != p.d)
    throw std::invalid_argument("analytic_solution: state has wrong dimension");
  std::vector<double> z(p.d);
  p.analytic_z(t, x.data(), z.data());
  return {p.analytic_y(t, x.data()), std::move(z)};
}

double default_horizon(const std::string& id) { return id == "ex4" ? 0.5 : 1.0; }

ProblemSpec make_problem(const std::string& id, std::size_t d, double T,
                         const std::map<std::string, double>& kv) {
  if (d < 1) throw std::invalid_argument("problem.d: must be >= 1");
  if (T <= 0) throw std::invalid_argument("problem.T: must be > 0");
  const double dd = static_cast<double>(d);
  if (id == "ex1")
    return example1(d, T, get(kv, "mu", 0.2 / dd), get(kv, "sigma", 1.0 / std::sqrt(dd)),
                    get(kv, "x0", 1.0));
  if (id == "ex2") return example2(d, T, get(kv, "alpha", 0.4));
  if (id == "ex3") return example3(d, T, get(kv, "r", 0.05), get(kv, "sigma", 0.4));
  if (id == "ex4")
    return example4(d, T, get(kv, "mu", 0.06), get(kv, "sigma", 0.2), get(kv, "rl", 0.04),
                    get(kv, "rb", 0.06), get(kv, "k1", 120.0), get(kv, "k2", 150.0),
                    get(kv, "s0", 100.0));
  throw std::invalid_argument("problem.id: unknown problem \"" + id + "\"");
}

}  // namespace bsde
