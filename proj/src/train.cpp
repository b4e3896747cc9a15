#include "bsde/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "bsde/checkpoint.hpp"
#include "bsde/rng.hpp"

namespace bsde {

namespace {

// seed streams within one run
constexpr std::uint64_t kInitStream = 0x100;
constexpr std::uint64_t kValStream = 0x200;
constexpr std::uint64_t kStepStreamBase = 0x10000;

}  // namespace

bool adam_step(std::vector<double>& theta, std::span<const double> grad, AdamState& state,
               double lr) {
  if (grad.size() != theta.size())
    throw std::invalid_argument("adam_step: gradient length does not match parameters");
  if (state.m.empty()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  for (double g : grad)
    if (!std::isfinite(g)) return false;
  state.k += 1;
  const double b1k = 1.0 - std::pow(state.beta1, static_cast<double>(state.k));
  const double b2k = 1.0 - std::pow(state.beta2, static_cast<double>(state.k));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / b1k;
    const double vhat = state.v[i] / b2k;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
  return true;
}

std::string policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::Plateau: return "plateau";
    case PolicyKind::StepSchedule: return "step_schedule";
    case PolicyKind::Constant: return "constant";
    case PolicyKind::WarmThenPlateau: return "warm_then_plateau";
  }
  return "?";
}

PolicyKind policy_from_name(const std::string& name) {
  if (name == "plateau") return PolicyKind::Plateau;
  if (name == "step_schedule") return PolicyKind::StepSchedule;
  if (name == "constant") return PolicyKind::Constant;
  if (name == "warm_then_plateau") return PolicyKind::WarmThenPlateau;
  throw std::invalid_argument("train.policy: unknown policy \"" + name + "\"");
}

DecayPolicy default_policy(SchemeKind kind) {
  DecayPolicy p;
  if (kind == SchemeKind::DBSDE) {
    p.lr0 = 1e-2;
    p.lr_min = 1e-4;
  } else {
    p.lr0 = 1e-3;
    p.lr_min = 1e-5;
  }
  return p;
}

PlateauDecision plateau_update(PlateauState& state, const DecayPolicy& policy,
                               std::span<const double> probe_losses) {
  if (probe_losses.empty())
    throw std::invalid_argument("plateau_update: no probe losses collected");
  double cur = 0.0;
  for (double v : probe_losses) cur += v;
  cur /= static_cast<double>(probe_losses.size());

  bool stop = false;
  if (state.lr == 0.0) state.lr = policy.lr0;
  if (state.prev_avg) {
    const double prev = *state.prev_avg;
    const double rel = prev != 0.0 ? (prev - cur) / prev : 0.0;
    if (rel < policy.threshold) {  // includes increases
      if (state.lr > policy.lr_min) {
        state.lr = std::max(state.lr * policy.factor, policy.lr_min);
      } else if (++state.stagnant >= policy.patience) {
        stop = true;
      }
    } else {
      state.stagnant = 0;
    }
  }
  state.prev_avg = cur;
  return {state.lr, stop};
}

double step_schedule(std::size_t k) {
  if (k < 1 || k > 100000)
    throw std::invalid_argument("step_schedule: step " + std::to_string(k) +
                                " outside [1, 100000]");
  if (k <= 20000) return 1e-3;
  if (k <= 50000) return 1e-4;
  if (k <= 80000) return 1e-5;
  return 1e-6;
}

std::string termination_name(TerminationReason r) {
  switch (r) {
    case TerminationReason::MaxSteps: return "max_steps";
    case TerminationReason::PlateauStop: return "plateau_stop";
    case TerminationReason::NC: return "NC";
  }
  return "?";
}

TrainResult train(SchemeModel& model, const TrainConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  const DecayPolicy& policy = config.policy;
  const TimeGrid& grid = model.grid();
  const ProblemSpec& problem = model.problem();

  TrainResult result;
  result.params = model.init(mix_seed(config.seed, kInitStream), config.init);

  BrownianBatch val_bb = sample_increments(mix_seed(config.seed, kValStream),
                                           policy.validation_size, grid, problem.d);
  PathBatch val_paths = euler_forward(problem, grid, val_bb);

  PlateauState plateau;
  plateau.lr = policy.lr0;
  std::vector<double> probes;
  probes.reserve(policy.probe_count);

  const bool plateau_kind =
      policy.kind == PolicyKind::Plateau || policy.kind == PolicyKind::WarmThenPlateau;

  auto checkpoint = [&](std::size_t step) {
    if (config.checkpoint_path.empty()) return;
    Checkpoint ck;
    ck.params = result.params;
    ck.adam_m = result.adam.m;
    ck.adam_v = result.adam.v;
    ck.adam_k = result.adam.k;
    ck.has_adam = true;
    ck.step = step;
    for (const auto& net : model.bn_states())
      for (const auto& st : net) ck.bn.push_back(st);
    save_checkpoint(config.checkpoint_path, ck);
  };

  TrainRecord& rec = result.record;
  rec.reason = TerminationReason::MaxSteps;

  for (std::size_t k = 1; k <= policy.max_steps; ++k) {
    double lr = policy.lr0;
    switch (policy.kind) {
      case PolicyKind::Constant: lr = policy.lr0; break;
      case PolicyKind::StepSchedule: lr = step_schedule(k); break;
      case PolicyKind::Plateau: lr = plateau.lr; break;
      case PolicyKind::WarmThenPlateau: lr = k <= policy.warmup_steps ? policy.lr0 : plateau.lr; break;
    }

    BrownianBatch bb = sample_increments(mix_seed(config.seed, kStepStreamBase + k), config.batch,
                                         grid, problem.d);
    PathBatch paths = euler_forward(problem, grid, bb);
    auto step_out = model.loss_and_grad(result.params, paths, bb);
    rec.train_loss.push_back(step_out.loss.total);
    rec.lr.push_back(lr);
    rec.steps = k;
    if (!step_out.finite || !adam_step(result.params.theta, step_out.grad, result.adam, lr)) {
      rec.reason = TerminationReason::NC;
      break;
    }

    if (k % policy.probe_every == 0) {
      LossBreakdown val = model.loss_value(result.params, val_paths, val_bb);
      if (!val.finite) {
        rec.val_loss.emplace_back(k, val.total);
        rec.reason = TerminationReason::NC;
        break;
      }
      rec.val_loss.emplace_back(k, val.total);
      probes.push_back(val.total);
    }

    if (k % policy.period == 0) {
      const bool apply = plateau_kind && (policy.kind != PolicyKind::WarmThenPlateau ||
                                          k >= policy.warmup_steps);
      if (apply && !probes.empty()) {
        PlateauDecision decision = plateau_update(plateau, policy, probes);
        if (decision.stop) {
          probes.clear();
          checkpoint(k);
          rec.reason = TerminationReason::PlateauStop;
          break;
        }
      }
      probes.clear();
      checkpoint(k);
    }
  }

  checkpoint(rec.steps);
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace bsde
