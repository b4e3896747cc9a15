#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsde/schemes.hpp"

namespace bsde {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t k = 0;
};

// Bias-corrected Adam update in place. Returns false (and leaves theta and
// the moments untouched) when the gradient contains non-finite entries.
bool adam_step(std::vector<double>& theta, std::span<const double> grad, AdamState& state,
               double lr);

enum class PolicyKind : std::uint8_t { Plateau, StepSchedule, Constant, WarmThenPlateau };

std::string policy_name(PolicyKind k);
PolicyKind policy_from_name(const std::string& name);

struct DecayPolicy {
  PolicyKind kind = PolicyKind::Plateau;
  double lr0 = 1e-3;
  double lr_min = 1e-5;
  std::size_t period = 1000;        // optimization steps per plateau decision
  std::size_t probe_every = 100;    // validation probe cadence
  std::size_t probe_count = 10;     // probes averaged per period
  std::size_t validation_size = 1024;
  double threshold = 0.05;          // relative improvement below this is a plateau
  double factor = 0.5;
  std::size_t max_steps = 60000;
  std::size_t warmup_steps = 30000;  // WarmThenPlateau: constant lr0 before this
  std::size_t patience = 2;          // stagnant periods at lr_min before stopping
};

// Plateau LR per scheme: 1e-2/1e-4 for the terminal-matching scheme,
// 1e-3/1e-5 for the single-network ones.
DecayPolicy default_policy(SchemeKind kind);

struct PlateauState {
  double lr = 0.0;
  std::optional<double> prev_avg;
  std::size_t stagnant = 0;
};

struct PlateauDecision {
  double lr;
  bool stop;
};

// One period boundary: average the probes, compare against the previous
// period, halve on a plateau (a loss increase counts as one), and stop
// after `patience` stagnant periods once the floor is reached.
PlateauDecision plateau_update(PlateauState& state, const DecayPolicy& policy,
                               std::span<const double> probe_losses);

// The fixed 1e-3 -> 1e-6 schedule over 100000 steps; k outside [1, 100000]
// is rejected.
double step_schedule(std::size_t k);

enum class TerminationReason : std::uint8_t { MaxSteps, PlateauStop, NC };
std::string termination_name(TerminationReason r);

struct TrainRecord {
  std::vector<double> train_loss;                         // one entry per step
  std::vector<double> lr;                                 // lr used at each step
  std::vector<std::pair<std::size_t, double>> val_loss;   // (step, probe loss)
  std::size_t steps = 0;
  double wall_seconds = 0.0;
  TerminationReason reason = TerminationReason::MaxSteps;
};

struct TrainConfig {
  std::size_t batch = 64;
  std::uint64_t seed = 1;
  InitDist init = InitDist::Uniform;
  DecayPolicy policy;
  std::string checkpoint_path;  // written at period boundaries and at the end when set
};

struct TrainResult {
  ParameterSet params;
  AdamState adam;
  TrainRecord record;
};

// Mini-batch Adam training of one scheme; a fresh Brownian batch per step,
// a validation batch fixed up front, deterministic in (config, seed).
TrainResult train(SchemeModel& model, const TrainConfig& config);

}  // namespace bsde
