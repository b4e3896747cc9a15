#include "bsde/runner.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "bsde/checkpoint.hpp"
#include "bsde/csv.hpp"
#include "bsde/rng.hpp"

namespace fs = std::filesystem;

namespace bsde {

namespace {

constexpr const char* kCodeVersion = "1.0.0";

const std::vector<std::string> kProblemKeys = {"mu", "sigma", "x0", "alpha", "r",
                                               "rl", "rb",    "k1", "k2",    "s0"};

std::size_t positive_size(const Config& cfg, const std::string& key, std::int64_t fallback) {
  const std::int64_t v = cfg.integer(key, fallback);
  if (v < 1) throw ConfigError(key + ": must be a positive integer, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

void run_pool(std::size_t tasks, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, tasks));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks) return;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

}  // namespace

ExperimentConfig experiment_from_config(const Config& cfg) {
  ExperimentConfig ec;
  ec.problem_id = cfg.str("problem.id", "ex1");
  if (ec.problem_id != "ex1" && ec.problem_id != "ex2" && ec.problem_id != "ex3" &&
      ec.problem_id != "ex4")
    throw ConfigError("problem.id: unknown problem \"" + ec.problem_id + "\"");
  ec.d = positive_size(cfg, "problem.d", 1);
  ec.T = cfg.number("problem.T", default_horizon(ec.problem_id));
  if (ec.T <= 0.0) throw ConfigError("problem.T: must be > 0");
  for (const std::string& k : kProblemKeys)
    if (cfg.has("problem." + k)) ec.problem_kv[k] = cfg.number("problem." + k);

  ec.scheme.kind = scheme_from_name(cfg.str("scheme.kind", "ladbsde"));
  const std::string backbone = cfg.str("scheme.backbone", "mlp");
  if (backbone == "mlp")
    ec.scheme.backbone = Backbone::MLP;
  else if (backbone == "rnn")
    ec.scheme.backbone = Backbone::RNN;
  else
    throw ConfigError("scheme.backbone: expected mlp or rnn, got \"" + backbone + "\"");
  ec.scheme.hidden_layers = static_cast<std::size_t>(cfg.integer("scheme.hidden_layers", 0));
  ec.scheme.hidden_width = static_cast<std::size_t>(cfg.integer("scheme.hidden_width", 0));
  ec.scheme.mean_reduction = cfg.boolean("scheme.mean_reduction", true);

  ec.N = positive_size(cfg, "grid.N", 20);
  if (ec.scheme.kind == SchemeKind::DBSDE && ec.N < 2)
    throw ConfigError("grid.N: the dbsde scheme requires N >= 2");

  DecayPolicy policy = default_policy(ec.scheme.kind);
  policy.kind = policy_from_name(cfg.str("train.policy", "plateau"));
  policy.lr0 = cfg.number("train.lr0", policy.lr0);
  policy.lr_min = cfg.number("train.lr_min", policy.lr_min);
  if (policy.lr0 <= 0.0) throw ConfigError("train.lr0: must be > 0");
  if (policy.lr_min <= 0.0 || policy.lr_min > policy.lr0)
    throw ConfigError("train.lr_min: must be in (0, lr0]");
  policy.max_steps = positive_size(cfg, "train.max_steps", 60000);
  policy.period = positive_size(cfg, "train.period", 1000);
  policy.probe_every = positive_size(cfg, "train.probe_every", 100);
  policy.probe_count = positive_size(cfg, "train.probe_count", 10);
  policy.validation_size = positive_size(cfg, "train.validation_size", 1024);
  policy.threshold = cfg.number("train.threshold", 0.05);
  policy.factor = cfg.number("train.factor", 0.5);
  policy.warmup_steps = positive_size(cfg, "train.warmup_steps", 30000);
  policy.patience = positive_size(cfg, "train.patience", 2);

  ec.train_base.policy = policy;
  ec.train_base.batch = positive_size(cfg, "train.batch", 64);
  const std::string init = cfg.str("train.init", "uniform");
  if (init == "uniform")
    ec.train_base.init = InitDist::Uniform;
  else if (init == "normal")
    ec.train_base.init = InitDist::Normal;
  else
    throw ConfigError("train.init: expected uniform or normal, got \"" + init + "\"");

  ec.seeds.clear();
  for (std::int64_t s : cfg.int_list("train.seeds")) {
    if (s < 0) throw ConfigError("train.seeds: seeds must be non-negative");
    ec.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (ec.seeds.empty()) ec.seeds = {1};
  std::set<std::uint64_t> uniq(ec.seeds.begin(), ec.seeds.end());
  if (uniq.size() != ec.seeds.size()) throw ConfigError("train.seeds: seeds must be distinct");

  ec.test_size = positive_size(cfg, "eval.test_size", 4096);
  ec.test_seed = static_cast<std::uint64_t>(cfg.integer("eval.test_seed", 9999));
  ec.workers = positive_size(cfg, "run.workers", 1);
  ec.out_dir = cfg.str("output.dir", "out");

  // resolved view (what the manifest records)
  Config eff = cfg;
  eff.set("problem.id", "\"" + ec.problem_id + "\"");
  eff.set("problem.d", std::to_string(ec.d));
  eff.set("problem.T", format_double(ec.T));
  eff.set("scheme.kind", "\"" + scheme_name(ec.scheme.kind) + "\"");
  eff.set("scheme.backbone", std::string("\"") + (ec.scheme.backbone == Backbone::MLP ? "mlp" : "rnn") + "\"");
  eff.set("grid.N", std::to_string(ec.N));
  eff.set("train.policy", "\"" + policy_name(policy.kind) + "\"");
  eff.set("train.lr0", format_double(policy.lr0));
  eff.set("train.lr_min", format_double(policy.lr_min));
  eff.set("train.max_steps", std::to_string(policy.max_steps));
  eff.set("train.batch", std::to_string(ec.train_base.batch));
  eff.set("train.validation_size", std::to_string(policy.validation_size));
  eff.set("train.init", "\"" + init + "\"");
  {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < ec.seeds.size(); ++i) os << (i ? ", " : "") << ec.seeds[i];
    os << "]";
    eff.set("train.seeds", os.str());
  }
  eff.set("eval.test_size", std::to_string(ec.test_size));
  eff.set("eval.test_seed", std::to_string(ec.test_seed));
  eff.set("run.workers", std::to_string(ec.workers));
  eff.set("output.dir", "\"" + ec.out_dir + "\"");
  ec.effective = std::move(eff);
  return ec;
}

ProblemSpec build_problem(const ExperimentConfig& cfg) {
  return make_problem(cfg.problem_id, cfg.d, cfg.T, cfg.problem_kv);
}

SchemeModel build_model(const ExperimentConfig& cfg) {
  return SchemeModel(cfg.scheme, build_problem(cfg), TimeGrid{cfg.T, cfg.N});
}

EnsembleResult run_ensemble(const ExperimentConfig& cfg, bool with_trajectories,
                            const std::string& checkpoint_dir) {
  const ProblemSpec problem = build_problem(cfg);
  const TimeGrid grid{cfg.T, cfg.N};

  PathBatch test_paths;
  BrownianBatch test_bb;
  if (with_trajectories) {
    test_bb = sample_increments(cfg.test_seed, cfg.test_size, grid, problem.d, cfg.workers);
    test_paths = euler_forward(problem, grid, test_bb, cfg.workers);
  }

  EnsembleResult result;
  result.runs.resize(cfg.seeds.size());
  run_pool(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
    SchemeModel model(cfg.scheme, problem, grid);
    TrainConfig tc = cfg.train_base;
    tc.seed = cfg.seeds[i];
    if (!checkpoint_dir.empty()) {
      const fs::path dir = fs::path(checkpoint_dir) / ("run_" + std::to_string(tc.seed));
      fs::create_directories(dir);
      tc.checkpoint_path = (dir / "checkpoint.bin").string();
    }
    TrainResult tr = train(model, tc);
    RunArtifacts& run = result.runs[i];
    run.seed = tc.seed;
    run.record = std::move(tr.record);
    run.params = std::move(tr.params);
    run.nc = run.record.reason == TerminationReason::NC;
    for (const auto& net : model.bn_states())
      for (const auto& st : net) run.bn_flat.push_back(st);
    if (!run.nc) {
      auto [y0, z0] = model.y0_z0(run.params);
      run.y0 = y0;
      run.z0 = std::move(z0);
      if (with_trajectories) run.traj = model.evaluate(run.params, test_paths, test_bb);
    }
  });
  for (const RunArtifacts& r : result.runs) result.any_nc = result.any_nc || r.nc;
  return result;
}

std::string train_record_csv(const TrainRecord& rec) {
  CsvWriter csv({"step", "train_loss", "val_loss", "lr"});
  std::size_t probe = 0;
  for (std::size_t i = 0; i < rec.train_loss.size(); ++i) {
    const std::size_t step = i + 1;
    std::string val;
    if (probe < rec.val_loss.size() && rec.val_loss[probe].first == step)
      val = format_double(rec.val_loss[probe++].second);
    csv.row({std::to_string(step), format_double(rec.train_loss[i]), val,
             format_double(rec.lr[i])});
  }
  return csv.text();
}

TrainRecord parse_train_record_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open train record " + path);
  TrainRecord rec;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<std::string, 4> cells;
    std::size_t cell = 0, start = 0;
    for (std::size_t i = 0; i <= line.size() && cell < 4; ++i) {
      if (i == line.size() || line[i] == ',') {
        cells[cell++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    const std::size_t step = static_cast<std::size_t>(std::stoull(cells[0]));
    rec.train_loss.push_back(std::stod(cells[1]));
    if (!cells[2].empty()) rec.val_loss.emplace_back(step, std::stod(cells[2]));
    rec.lr.push_back(std::stod(cells[3]));
    rec.steps = step;
  }
  return rec;
}

namespace {

std::string manifest_text(const ExperimentConfig& cfg, const std::string& command,
                          const EnsembleResult& ens, double wall_seconds,
                          const std::vector<std::string>& files) {
  Config m = cfg.effective;
  m.set("manifest.version", "1");
  m.set("manifest.code_version", std::string("\"") + kCodeVersion + "\"");
  m.set("manifest.command", "\"" + command + "\"");
  m.set("manifest.wall_seconds", format_double(wall_seconds));
  {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < ens.runs.size(); ++i)
      os << (i ? ", " : "") << "\"" << termination_name(ens.runs[i].record.reason) << "\"";
    os << "]";
    m.set("manifest.terminations", os.str());
  }
  {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < files.size(); ++i) os << (i ? ", " : "") << "\"" << files[i] << "\"";
    os << "]";
    m.set("manifest.files", os.str());
  }
  return m.serialize();
}

struct ReferenceT0 {
  double y0;
  std::optional<std::vector<double>> z0;
};

ReferenceT0 reference_t0(const ProblemSpec& problem) {
  if (problem.has_analytic) {
    auto [y0, z0] = analytic_solution(problem, 0.0, problem.x0);
    return {y0, std::move(z0)};
  }
  if (!problem.reference_y0)
    throw std::runtime_error("problem " + problem.id + " has no reference value for Y0");
  return {*problem.reference_y0, std::nullopt};
}

void write_t0_csv(const ExperimentConfig& cfg, const T0Errors& errors, const std::string& path) {
  CsvWriter csv({"scheme", "problem", "d", "N", "eps_y0", "sd_y0", "eps_z0", "sd_z0", "status"});
  if (errors.nc) {
    csv.row({scheme_name(cfg.scheme.kind), cfg.problem_id, std::to_string(cfg.d),
             std::to_string(cfg.N), "NC", "NC", "NC", "NC", "NC"});
  } else {
    const std::string z_eps = errors.z_available ? format_double(errors.eps_z0) : "NA";
    const std::string z_sd = errors.z_available ? format_double(errors.sd_z0) : "NA";
    csv.row({scheme_name(cfg.scheme.kind), cfg.problem_id, std::to_string(cfg.d),
             std::to_string(cfg.N), format_double(errors.eps_y0), format_double(errors.sd_y0),
             z_eps, z_sd, "ok"});
  }
  csv.write_atomic(path);
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  EnsembleResult ens = run_ensemble(cfg, false, cfg.out_dir);
  std::vector<std::string> files;
  for (const RunArtifacts& run : ens.runs) {
    const std::string rel = "run_" + std::to_string(run.seed);
    write_text_atomic((fs::path(cfg.out_dir) / rel / "train_record.csv").string(),
                      train_record_csv(run.record));
    files.push_back(rel + "/checkpoint.bin");
    files.push_back(rel + "/train_record.csv");
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_atomic((fs::path(cfg.out_dir) / "manifest.txt").string(),
                    manifest_text(cfg, "train", ens, wall, files));
  for (const RunArtifacts& run : ens.runs)
    std::cout << "run seed=" << run.seed << " steps=" << run.record.steps
              << " termination=" << termination_name(run.record.reason) << "\n";
  return ens.any_nc ? kExitNC : kExitOk;
}

int cmd_evaluate(const ExperimentConfig& cfg) {
  const ProblemSpec problem = build_problem(cfg);
  const TimeGrid grid{cfg.T, cfg.N};
  BrownianBatch test_bb = sample_increments(cfg.test_seed, cfg.test_size, grid, problem.d,
                                            cfg.workers);
  PathBatch test_paths = euler_forward(problem, grid, test_bb, cfg.workers);

  std::vector<RunT0> t0s(cfg.seeds.size());
  std::vector<SchemeModel::Trajectories> trajs(cfg.seeds.size());
  std::vector<TrainRecord> records(cfg.seeds.size());
  std::vector<bool> nc(cfg.seeds.size(), false);

  // termination reasons recorded by cmd_train, when available
  std::vector<std::string> terminations;
  const fs::path manifest_path = fs::path(cfg.out_dir) / "manifest.txt";
  if (fs::exists(manifest_path))
    terminations = Config::parse_file(manifest_path.string()).str_list("manifest.terminations");

  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const fs::path dir = fs::path(cfg.out_dir) / ("run_" + std::to_string(cfg.seeds[i]));
    const std::string ck_path = (dir / "checkpoint.bin").string();
    if (!fs::exists(ck_path)) throw ConfigError("evaluate: missing checkpoint " + ck_path);
    Checkpoint ck = load_checkpoint(ck_path);
    SchemeModel model(cfg.scheme, problem, grid);
    if (ck.params.theta.size() != model.parameter_count())
      throw ConfigError("evaluate: checkpoint " + ck_path + " has " +
                        std::to_string(ck.params.theta.size()) + " parameters, config needs " +
                        std::to_string(model.parameter_count()));
    // restore normalization statistics in save order (step-major)
    std::size_t bi = 0;
    for (auto& net : model.bn_states())
      for (auto& st : net)
        if (bi < ck.bn.size()) st = ck.bn[bi++];
    records[i] = parse_train_record_csv((dir / "train_record.csv").string());
    nc[i] = !records[i].train_loss.empty() && !std::isfinite(records[i].train_loss.back());
    if (i < terminations.size()) nc[i] = nc[i] || terminations[i] == "NC";
    RunT0& r = t0s[i];
    r.nc = nc[i];
    if (!r.nc) {
      auto [y0, z0] = model.y0_z0(ck.params);
      r.y0 = y0;
      r.z0 = std::move(z0);
      trajs[i] = model.evaluate(ck.params, test_paths, test_bb);
      if (!trajs[i].finite) {
        r.nc = true;
        nc[i] = true;
      }
    }
  }

  const ReferenceT0 ref = reference_t0(problem);
  T0Errors errors = t0_errors(t0s, ref.y0, ref.z0);
  fs::create_directories(cfg.out_dir);
  write_t0_csv(cfg, errors, (fs::path(cfg.out_dir) / "t0_errors.csv").string());

  CsvWriter reg({"scheme", "i", "t_i", "eps_y", "sd_y", "eps_z", "sd_z"});
  if (problem.has_analytic && !errors.nc) {
    RegressionErrors re = regression_errors(trajs, problem, test_paths);
    for (std::size_t i = 0; i < re.times.size(); ++i)
      reg.row({scheme_name(cfg.scheme.kind), std::to_string(i), format_double(re.times[i]),
               format_double(re.eps_y[i]), format_double(re.sd_y[i]), format_double(re.eps_z[i]),
               format_double(re.sd_z[i])});
  }
  reg.write_atomic((fs::path(cfg.out_dir) / "regression.csv").string());

  CsvWriter loss({"step", "mean", "sd"});
  bool traces_ok = true;
  for (const auto& r : records) traces_ok = traces_ok && !r.val_loss.empty();
  if (traces_ok) {
    LossTrace lt = mean_loss(records);
    for (std::size_t i = 0; i < lt.steps.size(); ++i)
      loss.row({std::to_string(lt.steps[i]), format_double(lt.mean[i]), format_double(lt.sd[i])});
  }
  loss.write_atomic((fs::path(cfg.out_dir) / "loss.csv").string());

  for (bool b : nc)
    if (b) return kExitNC;
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  const Config& raw = cfg.effective;
  std::vector<std::int64_t> ds = raw.int_list("sweep.d");
  std::vector<std::int64_t> ns = raw.int_list("sweep.N");
  std::vector<std::string> schemes = raw.str_list("sweep.schemes");
  if (ds.empty()) ds = {static_cast<std::int64_t>(cfg.d)};
  if (ns.empty()) ns = {static_cast<std::int64_t>(cfg.N)};
  if (schemes.empty()) schemes = {scheme_name(cfg.scheme.kind)};

  CsvWriter csv({"scheme", "problem", "d", "N", "eps_y0", "sd_y0", "eps_z0", "sd_z0", "status"});
  bool any_nc = false;
  for (const std::string& sch : schemes) {
    for (std::int64_t dv : ds) {
      for (std::int64_t nv : ns) {
        if (dv < 1) throw ConfigError("sweep.d: must be positive");
        if (nv < 1) throw ConfigError("sweep.N: must be positive");
        ExperimentConfig cell = cfg;
        cell.scheme.kind = scheme_from_name(sch);
        cell.d = static_cast<std::size_t>(dv);
        cell.N = static_cast<std::size_t>(nv);
        // per-scheme learning rates unless the config pinned them
        DecayPolicy def = default_policy(cell.scheme.kind);
        if (!raw.has("train.lr0")) cell.train_base.policy.lr0 = def.lr0;
        if (!raw.has("train.lr_min")) cell.train_base.policy.lr_min = def.lr_min;
        EnsembleResult ens = run_ensemble(cell, false, "");
        any_nc = any_nc || ens.any_nc;

        std::vector<RunT0> t0s;
        for (const RunArtifacts& r : ens.runs) t0s.push_back({r.y0, r.z0, r.nc});
        const ProblemSpec problem = build_problem(cell);
        const ReferenceT0 ref = reference_t0(problem);
        T0Errors errors = t0_errors(t0s, ref.y0, ref.z0);
        if (errors.nc) {
          csv.row({sch, cell.problem_id, std::to_string(cell.d), std::to_string(cell.N), "NC",
                   "NC", "NC", "NC", "NC"});
        } else {
          const std::string z_eps = errors.z_available ? format_double(errors.eps_z0) : "NA";
          const std::string z_sd = errors.z_available ? format_double(errors.sd_z0) : "NA";
          csv.row({sch, cell.problem_id, std::to_string(cell.d), std::to_string(cell.N),
                   format_double(errors.eps_y0), format_double(errors.sd_y0), z_eps, z_sd, "ok"});
        }
      }
    }
  }
  fs::create_directories(cfg.out_dir);
  csv.write_atomic((fs::path(cfg.out_dir) / "sweep.csv").string());
  return any_nc ? kExitNC : kExitOk;
}

int cmd_simulate(const ExperimentConfig& cfg) {
  const ProblemSpec problem = build_problem(cfg);
  const TimeGrid grid{cfg.T, cfg.N};
  const std::size_t samples =
      static_cast<std::size_t>(cfg.effective.integer("simulate.samples", 16));
  const std::uint64_t seed =
      static_cast<std::uint64_t>(cfg.effective.integer("simulate.seed",
                                                       static_cast<std::int64_t>(cfg.seeds[0])));
  BrownianBatch bb = sample_increments(seed, samples, grid, problem.d, cfg.workers);
  PathBatch paths = euler_forward(problem, grid, bb, cfg.workers);
  fs::create_directories(cfg.out_dir);
  const std::string out = (fs::path(cfg.out_dir) / "paths.bin").string();
  write_path_dump(out, paths, seed, problem.id);
  std::cout << "wrote " << out << " (M=" << samples << ", N=" << grid.N << ", d=" << problem.d
            << ")\n";
  return kExitOk;
}

namespace {

bool check(bool ok, const std::string& what, int& failures) {
  std::cout << (ok ? "[ok]   " : "[FAIL] ") << what << "\n";
  if (!ok) ++failures;
  return ok;
}

}  // namespace

int cmd_check() {
  int failures = 0;
  auto near = [](double a, double b, double tol) { return std::fabs(a - b) <= tol; };

  {
    ProblemSpec p = example1(1, 2.0, 0.2, 1.0, 1.0);
    auto [y0, z0] = analytic_solution(p, 0.0, p.x0);
    check(near(y0, 1.4687, 5e-5) && near(z0[0], -2.2874, 5e-5), "closed form, example 1 (d=1)",
          failures);
  }
  {
    ProblemSpec p = example3(100, 1.0, 0.05, 0.4);
    auto [y0, z0] = analytic_solution(p, 0.0, p.x0);
    check(near(y0, 77.1049, 5e-5) && near(z0[0], 0.9869, 5e-5) && near(z0[1], 0.2467, 5e-5),
          "closed form, example 3 (d=100)", failures);
  }
  check(param_count(CountScheme::LDBSDE_original, 100) == 223745 &&
            param_count(CountScheme::LaDBSDE, 100) == 25961 &&
            param_count(CountScheme::DBSDE, 1, 2) == 191,
        "parameter counts", failures);
  {
    // gradient spot check: d/dw sum(tanh(w x)) at w = 0 equals x
    Tape tape;
    Tensor w = tape.leaf({1, 3}, {0.0, 0.0, 0.0});
    Tensor x({3, 1}, {0.5, -1.0, 2.0});
    Tensor g = tape.grad_wrt_input(sum(tanh(matmul(w, x))), w);
    check(near(g.at(0), 0.5, 1e-12) && near(g.at(1), -1.0, 1e-12) && near(g.at(2), 2.0, 1e-12),
          "reverse-mode gradient", failures);
  }
  {
    // the two loss accumulations agree
    ProblemSpec p = example1(2, 1.0, 0.1, 0.7, 1.0);
    TimeGrid grid{1.0, 6};
    BrownianBatch bb = sample_increments(7, 4, grid, p.d);
    PathBatch paths = euler_forward(p, grid, bb);
    MLPConfig cfg{p.d + 1, 1, 2, 6, Activation::Tanh, false};
    ParameterSet params = init_params(cfg, 11, InitDist::Uniform);
    MlpStepFunction fa(p, cfg, params), fb(p, cfg, params);
    Tape ta, tb;
    LossResult fwd = ladbsde_loss_forward(p, grid, paths, bb, fa, ta);
    LossResult bwd = ladbsde_loss_backward(p, grid, paths, bb, fb, tb);
    const double rel = std::fabs(fwd.breakdown.total - bwd.breakdown.total) /
                       std::max(1.0, std::fabs(bwd.breakdown.total));
    check(rel < 1e-10, "loss accumulation equivalence", failures);
  }
  check(near(step_schedule(1), 1e-3, 0) && near(step_schedule(20001), 1e-4, 0) &&
            near(step_schedule(100000), 1e-6, 0),
        "learning-rate schedule", failures);

  std::cout << (failures ? "check: FAILED\n" : "check: all good\n");
  return failures ? kExitRuntime : kExitOk;
}

}  // namespace bsde
