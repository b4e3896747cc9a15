#include "bsde/sde.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "bsde/rng.hpp"

namespace bsde {

namespace {

void parallel_over(std::size_t count, std::size_t workers, const std::function<void(std::size_t, std::size_t)>& run_range) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    run_range(0, count);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk, hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&run_range, lo, hi] { run_range(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

Tensor BrownianBatch::step_tensor(std::size_t i) const {
  std::vector<double> vals(M * d);
  for (std::size_t m = 0; m < M; ++m)
    std::memcpy(vals.data() + m * d, step(m, i), d * sizeof(double));
  return Tensor({M, d}, std::move(vals));
}

BrownianBatch BrownianBatch::coarsen(std::size_t factor) const {
  if (factor == 0 || N % factor != 0)
    throw std::invalid_argument("coarsen: factor must divide the step count");
  BrownianBatch out;
  out.M = M;
  out.N = N / factor;
  out.d = d;
  out.seed = seed;
  out.dt = dt * static_cast<double>(factor);
  out.dw.assign(M * out.N * d, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t i = 0; i < N; ++i) {
      const double* src = step(m, i);
      double* dst = out.dw.data() + (m * out.N + i / factor) * d;
      for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    }
  return out;
}

BrownianBatch sample_increments(std::uint64_t seed, std::size_t M, const TimeGrid& grid,
                                std::size_t d, std::size_t workers) {
  if (M < 1) throw std::invalid_argument("sample_increments: M must be >= 1");
  BrownianBatch bb;
  bb.M = M;
  bb.N = grid.N;
  bb.d = d;
  bb.seed = seed;
  bb.dt = grid.dt();
  bb.dw.resize(M * grid.N * d);
  const double sdt = std::sqrt(grid.dt());
  parallel_over(M, workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t m = lo; m < hi; ++m)
      for (std::size_t i = 0; i < grid.N; ++i)
        for (std::size_t k = 0; k < d; ++k)
          bb.dw[(m * grid.N + i) * d + k] = sdt * counter_normal(seed, m, i * d + k);
  });
  return bb;
}

Tensor PathBatch::states_tensor(std::size_t i) const {
  std::vector<double> vals(M * d);
  for (std::size_t m = 0; m < M; ++m)
    std::memcpy(vals.data() + m * d, state(m, i), d * sizeof(double));
  return Tensor({M, d}, std::move(vals));
}

PathBatch euler_forward(const ProblemSpec& problem, const TimeGrid& grid,
                        const BrownianBatch& brownian, std::size_t workers) {
  if (problem.d != brownian.d)
    throw std::invalid_argument("euler_forward: problem dimension " + std::to_string(problem.d) +
                                " does not match increments " + std::to_string(brownian.d));
  if (grid.N != brownian.N)
    throw std::invalid_argument("euler_forward: grid has " + std::to_string(grid.N) +
                                " steps, increments have " + std::to_string(brownian.N));
  const std::size_t M = brownian.M, d = problem.d, N = grid.N;
  PathBatch pb;
  pb.grid = grid;
  pb.M = M;
  pb.d = d;
  pb.x.assign(M * (N + 1) * d, 0.0);
  const double dt = grid.dt();

  std::atomic<bool> bad{false};
  std::atomic<std::size_t> bad_m{0}, bad_i{0};
  parallel_over(M, workers, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> mu(d), diag(d), mat;
    if (!problem.sigma_diagonal) mat.resize(d * d);
    for (std::size_t m = lo; m < hi; ++m) {
      double* row0 = pb.x.data() + m * (N + 1) * d;
      std::memcpy(row0, problem.x0.data(), d * sizeof(double));
      for (std::size_t i = 0; i < N; ++i) {
        const double* xi = row0 + i * d;
        double* xn = row0 + (i + 1) * d;
        const double* dwi = brownian.step(m, i);
        const double ti = grid.t(i);
        problem.mu(ti, xi, mu.data());
        if (problem.sigma_diagonal) {
          problem.sigma_diag(ti, xi, diag.data());
          for (std::size_t k = 0; k < d; ++k) xn[k] = xi[k] + mu[k] * dt + diag[k] * dwi[k];
        } else {
          problem.sigma(ti, xi, mat.data());
          for (std::size_t k = 0; k < d; ++k) {
            double diff = 0.0;
            for (std::size_t j = 0; j < d; ++j) diff += mat[k * d + j] * dwi[j];
            xn[k] = xi[k] + mu[k] * dt + diff;
          }
        }
        for (std::size_t k = 0; k < d; ++k) {
          if (!std::isfinite(xn[k])) {
            bad = true;
            bad_m = m;
            bad_i = i + 1;
            return;
          }
        }
      }
    }
  });
  if (bad)
    throw SimulationError("euler_forward: non-finite state at sample " +
                          std::to_string(bad_m.load()) + ", step " + std::to_string(bad_i.load()));
  return pb;
}

std::vector<StrongErrorPoint> strong_error(const ProblemSpec& problem, const ExactTerminal& exact,
                                           const TimeGrid& finest, std::span<const std::size_t> ladder,
                                           std::size_t M, std::uint64_t seed) {
  BrownianBatch fine = sample_increments(seed, M, finest, problem.d);
  std::vector<StrongErrorPoint> out;
  std::vector<std::vector<double>> exact_xt(M);
  for (std::size_t m = 0; m < M; ++m) exact_xt[m] = exact(fine, m);

  for (std::size_t n : ladder) {
    if (n == 0 || finest.N % n != 0)
      throw std::invalid_argument("strong_error: ladder entry must divide the finest grid");
    BrownianBatch bb = fine.coarsen(finest.N / n);
    TimeGrid grid{finest.T, n};
    PathBatch pb = euler_forward(problem, grid, bb);
    double acc = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const double* xt = pb.state(m, n);
      double dist2 = 0.0;
      for (std::size_t k = 0; k < problem.d; ++k) {
        const double e = xt[k] - exact_xt[m][k];
        dist2 += e * e;
      }
      acc += std::sqrt(dist2);
    }
    out.push_back({grid.dt(), acc / static_cast<double>(M)});
  }
  return out;
}

double log_log_slope(std::span<const StrongErrorPoint> points) {
  const double n = static_cast<double>(points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : points) {
    const double x = std::log(p.dt), y = std::log(p.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  put_u64(os, v);
}

double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double x;
  std::memcpy(&x, &v, 8);
  return x;
}

constexpr char kPathMagic[8] = {'B', 'S', 'D', 'E', 'P', 'A', 'T', 'H'};

}  // namespace

void write_path_dump(const std::string& path, const PathBatch& paths, std::uint64_t seed,
                     const std::string& problem_id) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_path_dump: cannot open " + path);
  os.write(kPathMagic, 8);
  put_u64(os, 1);  // version
  put_u64(os, paths.M);
  put_u64(os, paths.grid.N);
  put_u64(os, paths.d);
  put_u64(os, seed);
  put_f64(os, paths.grid.T);
  put_u64(os, problem_id.size());
  os.write(problem_id.data(), static_cast<std::streamsize>(problem_id.size()));
  for (double v : paths.x) put_f64(os, v);
  if (!os) throw std::runtime_error("write_path_dump: write failed for " + path);
}

PathDump read_path_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_path_dump: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kPathMagic, 8) != 0)
    throw std::runtime_error("read_path_dump: bad magic in " + path);
  const std::uint64_t version = get_u64(is);
  if (version != 1) throw std::runtime_error("read_path_dump: unsupported version");
  PathDump dump;
  dump.paths.M = get_u64(is);
  dump.paths.grid.N = get_u64(is);
  dump.paths.d = get_u64(is);
  dump.seed = get_u64(is);
  dump.paths.grid.T = get_f64(is);
  const std::uint64_t idlen = get_u64(is);
  dump.problem_id.resize(idlen);
  is.read(dump.problem_id.data(), static_cast<std::streamsize>(idlen));
  dump.paths.x.resize(dump.paths.M * (dump.paths.grid.N + 1) * dump.paths.d);
  for (double& v : dump.paths.x) v = get_f64(is);
  if (!is) throw std::runtime_error("read_path_dump: truncated file " + path);
  return dump;
}

}  // namespace bsde
