#include "bsde/schemes.hpp"

#include <cmath>
#include <stdexcept>

namespace bsde {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

Tensor row_dot(const Tensor& a, const Tensor& b) {
  // per-sample inner product of {M,d} rows -> {M,1}
  return matmul(mul(a, b), Tensor::ones({a.cols(), 1}));
}

bool tensor_ok(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v) || std::fabs(v) > kDivergenceBound) return false;
  return true;
}

Tensor time_column(double t, std::size_t m) { return Tensor::full({m, 1}, t); }

double finalize_local(Tensor& acc, const Tensor& term, std::vector<double>& local) {
  acc = acc.defined() ? add(acc, term) : term;
  const double v = term.value();
  local.push_back(v);
  return v;
}

}  // namespace

std::string scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::DBSDE: return "dbsde";
    case SchemeKind::LDBSDE: return "ldbsde";
    case SchemeKind::LaDBSDE: return "ladbsde";
  }
  return "?";
}

SchemeKind scheme_from_name(const std::string& name) {
  if (name == "dbsde") return SchemeKind::DBSDE;
  if (name == "ldbsde") return SchemeKind::LDBSDE;
  if (name == "ladbsde") return SchemeKind::LaDBSDE;
  fail("scheme: unknown scheme \"" + name + "\"");
}

// ---------------------------------------------------------------------------
// Step evaluators
// ---------------------------------------------------------------------------

MlpStepFunction::MlpStepFunction(const ProblemSpec& problem, const MLPConfig& cfg,
                                 const ParameterSet& params)
    : problem_(&problem), cfg_(cfg), params_(&params) {}

void MlpStepFunction::begin(Tape& tape) { bound_ = bind_params(tape, *params_); }

StepFunction::Eval MlpStepFunction::eval(Tape& tape, std::size_t, double t, const Tensor& x_const,
                                         bool need_z) {
  const std::size_t m = x_const.rows();
  Eval out;
  if (!need_z) {
    Tensor input = concat_cols(time_column(t, m), x_const);
    out.y = mlp_forward(cfg_, bound_, input);
    return out;
  }
  Tensor xleaf = tape.leaf(x_const);
  Tensor input = concat_cols(time_column(t, m), xleaf);
  out.y = mlp_forward(cfg_, bound_, input);
  Tensor grad_x = tape.grad_wrt_input(sum(out.y), xleaf);
  out.z = mul(grad_x, sigma_diag_batch(*problem_, t, x_const));
  return out;
}

RnnStepFunction::RnnStepFunction(const ProblemSpec& problem, const RNNConfig& cfg,
                                 const ParameterSet& params)
    : problem_(&problem), cfg_(cfg), params_(&params) {}

void RnnStepFunction::begin(Tape& tape) {
  bound_ = bind_params(tape, *params_);
  hidden_ = Tensor{};
}

StepFunction::Eval RnnStepFunction::eval(Tape& tape, std::size_t, double t, const Tensor& x_const,
                                         bool need_z) {
  const std::size_t m = x_const.rows();
  Tensor xleaf = need_z ? tape.leaf(x_const) : x_const;
  Tensor input = concat_cols(time_column(t, m), xleaf);
  Tensor pre = add(matmul(input, bound_.by_name("Wx")), broadcast_rows(bound_.by_name("bh"), m));
  if (hidden_.defined()) pre = add(pre, matmul(hidden_, bound_.by_name("Wh")));
  hidden_ = apply_activation(cfg_.act, pre);
  Eval out;
  out.y = add(matmul(hidden_, bound_.by_name("Wy")), broadcast_rows(bound_.by_name("by"), m));
  if (need_z) {
    Tensor grad_x = tape.grad_wrt_input(sum(out.y), xleaf);
    out.z = mul(grad_x, sigma_diag_batch(*problem_, t, x_const));
  }
  return out;
}

StepFunction::Eval AnalyticStepFunction::eval(Tape&, std::size_t, double t, const Tensor& x_const,
                                              bool need_z) {
  const std::size_t m = x_const.rows(), d = x_const.cols();
  std::vector<double> y(m);
  for (std::size_t i = 0; i < m; ++i) y[i] = problem_->analytic_y(t, x_const.data() + i * d);
  Eval out;
  out.y = Tensor({m, 1}, std::move(y));
  if (need_z) {
    std::vector<double> z(m * d);
    for (std::size_t i = 0; i < m; ++i)
      problem_->analytic_z(t, x_const.data() + i * d, z.data() + i * d);
    out.z = Tensor({m, d}, std::move(z));
  }
  return out;
}

Tensor z_from_network(Tape& tape, const ProblemSpec& problem, const MLPConfig& cfg,
                      const BoundParams& params, double t, const Tensor& x_const) {
  const std::size_t m = x_const.rows();
  Tensor xleaf = tape.leaf(x_const);
  Tensor input = concat_cols(time_column(t, m), xleaf);
  Tensor y = mlp_forward(cfg, params, input);
  if (y.cols() != 1) fail("z_from_network: network output must be scalar per sample");
  Tensor grad_x = tape.grad_wrt_input(sum(y), xleaf);
  return mul(grad_x, sigma_diag_batch(problem, t, x_const));
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {

struct StepTerms {
  std::vector<StepFunction::Eval> evals;  // i = 0..N-1 (plus N for the terminal net)
  std::vector<Tensor> f;                  // driver values, i = 0..N-1
  std::vector<Tensor> zdw;                // Z_i dW_i, i = 0..N-1
  bool ok = true;
};

StepTerms evaluate_steps(const ProblemSpec& problem, const TimeGrid& grid, const PathBatch& paths,
                         const BrownianBatch& brownian, StepFunction& fn, Tape& tape,
                         bool terminal_eval) {
  const std::size_t N = grid.N;
  StepTerms st;
  st.evals.reserve(N + 1);
  st.f.reserve(N);
  st.zdw.reserve(N);
  fn.begin(tape);
  for (std::size_t i = 0; i < N; ++i) {
    Tensor x = paths.states_tensor(i);
    auto ev = fn.eval(tape, i, grid.t(i), x, true);
    if (!tensor_ok(ev.y) || !tensor_ok(ev.z)) st.ok = false;
    st.f.push_back(problem.driver(grid.t(i), x, ev.y, ev.z));
    st.zdw.push_back(row_dot(ev.z, brownian.step_tensor(i)));
    st.evals.push_back(std::move(ev));
  }
  if (terminal_eval) {
    Tensor xN = paths.states_tensor(N);
    auto ev = fn.eval(tape, N, grid.t(N), xN, false);
    if (!tensor_ok(ev.y)) st.ok = false;
    st.evals.push_back(std::move(ev));
  }
  return st;
}

LossResult assemble(Tensor total, std::vector<double> local, double terminal, bool ok) {
  LossResult res;
  res.breakdown.local = std::move(local);
  res.breakdown.terminal = terminal;
  res.breakdown.total = total.defined() ? total.value() : 0.0;
  res.breakdown.finite = ok && std::isfinite(res.breakdown.total);
  if (res.breakdown.finite) res.total = total;
  return res;
}

}  // namespace

LossResult ldbsde_loss(const ProblemSpec& problem, const TimeGrid& grid, const PathBatch& paths,
                       const BrownianBatch& brownian, StepFunction& fn, Tape& tape,
                       bool mean_reduction) {
  const std::size_t N = grid.N, M = paths.M;
  const double dt = grid.dt();
  const double norm = mean_reduction ? 1.0 / static_cast<double>(M) : 1.0;
  StepTerms st = evaluate_steps(problem, grid, paths, brownian, fn, tape, true);

  Tensor total;
  std::vector<double> local;
  local.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    Tensor resid = sub(add(sub(st.evals[i].y, scale(st.f[i], dt)), st.zdw[i]), st.evals[i + 1].y);
    Tensor li = scale(sum(square(resid)), norm);
    finalize_local(total, li, local);
  }
  Tensor terminal =
      scale(sum(square(sub(st.evals[N].y, problem.terminal(paths.states_tensor(N))))), norm);
  total = add(total, terminal);
  return assemble(total, std::move(local), terminal.value(), st.ok);
}

LossResult ladbsde_loss_backward(const ProblemSpec& problem, const TimeGrid& grid,
                                 const PathBatch& paths, const BrownianBatch& brownian,
                                 StepFunction& fn, Tape& tape, bool mean_reduction) {
  const std::size_t N = grid.N, M = paths.M;
  const double dt = grid.dt();
  const double norm = mean_reduction ? 1.0 / static_cast<double>(M) : 1.0;
  StepTerms st = evaluate_steps(problem, grid, paths, brownian, fn, tape, false);

  std::vector<Tensor> ytilde(N);
  Tensor acc = problem.terminal(paths.states_tensor(N));
  for (std::size_t ir = N; ir-- > 0;) {
    acc = sub(add(acc, scale(st.f[ir], dt)), st.zdw[ir]);
    ytilde[ir] = acc;
  }
  Tensor total;
  std::vector<double> local;
  local.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    Tensor li = scale(sum(square(sub(st.evals[i].y, ytilde[i]))), norm);
    finalize_local(total, li, local);
  }
  return assemble(total, std::move(local), 0.0, st.ok);
}

LossResult ladbsde_loss_forward(const ProblemSpec& problem, const TimeGrid& grid,
                                const PathBatch& paths, const BrownianBatch& brownian,
                                StepFunction& fn, Tape& tape, bool mean_reduction) {
  const std::size_t N = grid.N, M = paths.M;
  const double dt = grid.dt();
  const double norm = mean_reduction ? 1.0 / static_cast<double>(M) : 1.0;
  StepTerms st = evaluate_steps(problem, grid, paths, brownian, fn, tape, false);

  Tensor g = problem.terminal(paths.states_tensor(N));
  Tensor total;
  std::vector<double> local;
  local.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    Tensor yt = g;
    for (std::size_t j = i; j < N; ++j) yt = add(yt, sub(scale(st.f[j], dt), st.zdw[j]));
    Tensor li = scale(sum(square(sub(st.evals[i].y, yt))), norm);
    finalize_local(total, li, local);
  }
  return assemble(total, std::move(local), 0.0, st.ok);
}

SchemeOutput dbsde_rollout(const ProblemSpec& problem, const TimeGrid& grid,
                           const PathBatch& paths, const BrownianBatch& brownian,
                           const BoundParams& all, const MLPConfig& step_cfg,
                           std::vector<std::vector<BatchNormState>>& bn, NetMode mode) {
  const std::size_t N = grid.N, M = paths.M;
  const double dt = grid.dt();
  const std::size_t per_net = mlp_layout(step_cfg).size();
  SchemeOutput out;
  out.y.reserve(N + 1);
  out.z.reserve(N);

  out.y.push_back(broadcast_rows(all.tensors[0], M));
  out.z.push_back(broadcast_rows(all.tensors[1], M));
  for (std::size_t i = 0; i < N; ++i) {
    Tensor x = paths.states_tensor(i);
    Tensor f = problem.driver(grid.t(i), x, out.y[i], out.z[i]);
    Tensor ynext = add(sub(out.y[i], scale(f, dt)), row_dot(out.z[i], brownian.step_tensor(i)));
    out.y.push_back(ynext);
    if (!tensor_ok(ynext)) {
      out.finite = false;
      return out;
    }
    if (i + 1 < N) {
      BoundParams net;
      net.tensors.assign(all.tensors.begin() + 2 + (i)*per_net,
                         all.tensors.begin() + 2 + (i + 1) * per_net);
      Tensor zi = mlp_forward(step_cfg, net, paths.states_tensor(i + 1), mode, &bn[i]);
      if (!tensor_ok(zi)) {
        out.finite = false;
        return out;
      }
      out.z.push_back(std::move(zi));
    }
  }
  return out;
}

LossResult dbsde_loss(const SchemeOutput& out, const ProblemSpec& problem, const PathBatch& paths,
                      bool mean_reduction) {
  if (!out.finite) {
    LossResult res;
    res.breakdown.finite = false;
    return res;
  }
  const std::size_t M = paths.M, N = paths.grid.N;
  const double norm = mean_reduction ? 1.0 / static_cast<double>(M) : 1.0;
  Tensor mismatch = sub(out.y[N], problem.terminal(paths.states_tensor(N)));
  Tensor total = scale(sum(square(mismatch)), norm);
  LossResult res;
  res.breakdown.total = total.value();
  res.breakdown.terminal = res.breakdown.total;
  res.breakdown.finite = std::isfinite(res.breakdown.total);
  if (res.breakdown.finite) res.total = total;
  return res;
}

// ---------------------------------------------------------------------------
// SchemeModel
// ---------------------------------------------------------------------------

SchemeModel::SchemeModel(SchemeConfig cfg, ProblemSpec problem, TimeGrid grid)
    : cfg_(cfg), problem_(std::move(problem)), grid_(grid) {
  const std::size_t d = problem_.d;
  const std::size_t width = cfg_.hidden_width ? cfg_.hidden_width : 10 + d;
  if (cfg_.kind == SchemeKind::DBSDE) {
    if (grid_.N < 2) fail("scheme: the terminal-matching scheme requires N >= 2");
    if (cfg_.backbone == Backbone::RNN) fail("scheme: recurrent backbone applies to the single-network schemes only");
    const std::size_t layers = cfg_.hidden_layers ? cfg_.hidden_layers : 2;
    net_cfg_ = MLPConfig{d, d, layers, width, Activation::Relu, true};
    layout_.push_back(Segment{"y0", 0, {1, 1}, SegmentKind::Free});
    layout_.push_back(Segment{"z0", 1, {1, d}, SegmentKind::Free});
    const auto net_layout = mlp_layout(net_cfg_);
    for (std::size_t i = 1; i < grid_.N; ++i) {
      append_layout(layout_, "net" + std::to_string(i) + ".", net_layout);
      bn_.push_back(make_bn_states(net_cfg_));
    }
  } else {
    const std::size_t layers = cfg_.hidden_layers ? cfg_.hidden_layers : 4;
    const Activation act =
        cfg_.kind == SchemeKind::LDBSDE ? Activation::Sin : Activation::Tanh;
    if (cfg_.backbone == Backbone::MLP) {
      net_cfg_ = MLPConfig{d + 1, 1, layers, width, act, false};
      layout_ = mlp_layout(net_cfg_);
    } else {
      rnn_cfg_ = RNNConfig{d + 1, 1, width, act};
      layout_ = rnn_layout(rnn_cfg_);
    }
  }
}

ParameterSet SchemeModel::init(std::uint64_t seed, InitDist dist) const {
  return init_params(layout_, seed, dist);
}

std::unique_ptr<StepFunction> SchemeModel::make_step_function(const ParameterSet& params) const {
  if (cfg_.backbone == Backbone::RNN)
    return std::make_unique<RnnStepFunction>(problem_, rnn_cfg_, params);
  return std::make_unique<MlpStepFunction>(problem_, net_cfg_, params);
}

LossResult SchemeModel::run_loss(const ParameterSet& params, const PathBatch& paths,
                                 const BrownianBatch& brownian, NetMode mode, Tape& tape,
                                 BoundParams* bound_out) {
  if (params.theta.size() != parameter_count())
    fail("scheme: parameter vector has length " + std::to_string(params.theta.size()) +
         ", expected " + std::to_string(parameter_count()));
  if (cfg_.kind == SchemeKind::DBSDE) {
    BoundParams bound =
        bound_out ? bind_params(tape, params) : constant_params(params);
    SchemeOutput out = dbsde_rollout(problem_, grid_, paths, brownian, bound, net_cfg_, bn_, mode);
    if (bound_out) *bound_out = std::move(bound);
    return dbsde_loss(out, problem_, paths, cfg_.mean_reduction);
  }
  auto fn = make_step_function(params);
  LossResult res;
  if (cfg_.kind == SchemeKind::LDBSDE)
    res = ldbsde_loss(problem_, grid_, paths, brownian, *fn, tape, cfg_.mean_reduction);
  else
    res = ladbsde_loss_backward(problem_, grid_, paths, brownian, *fn, tape, cfg_.mean_reduction);
  if (bound_out) {
    if (cfg_.backbone == Backbone::RNN)
      *bound_out = static_cast<RnnStepFunction*>(fn.get())->bound();
    else
      *bound_out = static_cast<MlpStepFunction*>(fn.get())->bound();
  }
  return res;
}

SchemeModel::StepOutput SchemeModel::loss_and_grad(const ParameterSet& params,
                                                   const PathBatch& paths,
                                                   const BrownianBatch& brownian) {
  Tape tape;
  tape.reserve(grid_.N * 96 + 64);
  BoundParams bound;
  LossResult res = run_loss(params, paths, brownian, NetMode::Train, tape, &bound);
  StepOutput out;
  out.loss = res.breakdown;
  if (!res.breakdown.finite) {
    out.finite = false;
    return out;
  }
  GradientMap grads = tape.backward(res.total, std::span<const Tensor>(bound.tensors));
  out.grad = collect_gradients(grads, bound);
  for (double g : out.grad) {
    if (!std::isfinite(g)) {
      out.finite = false;
      break;
    }
  }
  return out;
}

LossBreakdown SchemeModel::loss_value(const ParameterSet& params, const PathBatch& paths,
                                      const BrownianBatch& brownian) {
  Tape tape;
  tape.reserve(grid_.N * 64 + 32);
  return run_loss(params, paths, brownian, NetMode::Inference, tape, nullptr).breakdown;
}

SchemeModel::Trajectories SchemeModel::evaluate(const ParameterSet& params, const PathBatch& paths,
                                                const BrownianBatch& brownian) {
  Trajectories tr;
  const std::size_t N = grid_.N;
  Tape tape;
  tape.reserve(grid_.N * 64 + 32);
  if (cfg_.kind == SchemeKind::DBSDE) {
    BoundParams bound = constant_params(params);
    SchemeOutput out =
        dbsde_rollout(problem_, grid_, paths, brownian, bound, net_cfg_, bn_, NetMode::Inference);
    tr.finite = out.finite;
    for (const Tensor& y : out.y) tr.y.emplace_back(y.values().begin(), y.values().end());
    for (const Tensor& z : out.z) tr.z.emplace_back(z.values().begin(), z.values().end());
    return tr;
  }
  auto fn = make_step_function(params);
  fn->begin(tape);
  const bool eval_terminal = cfg_.kind == SchemeKind::LDBSDE;
  for (std::size_t i = 0; i < N + (eval_terminal ? 1 : 0); ++i) {
    const bool need_z = i < N;
    auto ev = fn->eval(tape, i, grid_.t(i), paths.states_tensor(i), need_z);
    if (!tensor_ok(ev.y) || (need_z && !tensor_ok(ev.z))) tr.finite = false;
    tr.y.emplace_back(ev.y.values().begin(), ev.y.values().end());
    if (need_z) tr.z.emplace_back(ev.z.values().begin(), ev.z.values().end());
  }
  return tr;
}

std::pair<double, std::vector<double>> SchemeModel::y0_z0(const ParameterSet& params) {
  if (cfg_.kind == SchemeKind::DBSDE) {
    const double y0 = params.theta[params.layout[0].offset];
    const Segment& z0 = params.layout[1];
    std::vector<double> z(params.theta.begin() + static_cast<std::ptrdiff_t>(z0.offset),
                          params.theta.begin() + static_cast<std::ptrdiff_t>(z0.offset + z0.size()));
    return {y0, std::move(z)};
  }
  Tape tape;
  auto fn = make_step_function(params);
  fn->begin(tape);
  Tensor x0({1, problem_.d}, std::vector<double>(problem_.x0));
  auto ev = fn->eval(tape, 0, 0.0, x0, true);
  return {ev.y.value(), std::vector<double>(ev.z.values().begin(), ev.z.values().end())};
}

}  // namespace bsde
