#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bsde/nets.hpp"
#include "bsde/problems.hpp"
#include "bsde/sde.hpp"
#include "bsde/tensor.hpp"

namespace bsde {

enum class SchemeKind : std::uint8_t { DBSDE, LDBSDE, LaDBSDE };
enum class Backbone : std::uint8_t { MLP, RNN };

std::string scheme_name(SchemeKind k);
SchemeKind scheme_from_name(const std::string& name);

struct SchemeConfig {
  SchemeKind kind = SchemeKind::LaDBSDE;
  Backbone backbone = Backbone::MLP;
  std::size_t hidden_layers = 0;  // 0 -> per-scheme default (2 for DBSDE, 4 otherwise)
  std::size_t hidden_width = 0;   // 0 -> 10+d
  bool mean_reduction = true;     // losses averaged over the batch
};

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> local;  // per time index
  double terminal = 0.0;      // LDBSDE/DBSDE terminal term
  bool finite = true;
};

struct LossResult {
  LossBreakdown breakdown;
  Tensor total;  // taped scalar; undefined when the evaluation went non-finite
};

// Per-time-index candidate (Y, Z) on a batch. Loss functions call eval
// with increasing i so stateful (recurrent) evaluators work; begin resets
// any per-tape state.
class StepFunction {
 public:
  virtual ~StepFunction() = default;
  struct Eval {
    Tensor y;  // {M,1}
    Tensor z;  // {M,d}; undefined when not requested
  };
  virtual void begin(Tape& tape) { (void)tape; }
  virtual Eval eval(Tape& tape, std::size_t i, double t, const Tensor& x_const, bool need_z) = 0;
};

// Network-backed evaluator: Y from the net at (t, x), Z from the input
// gradient times the (diagonal) diffusion, all recorded so parameter
// gradients flow through the extracted Z.
class MlpStepFunction : public StepFunction {
 public:
  MlpStepFunction(const ProblemSpec& problem, const MLPConfig& cfg, const ParameterSet& params);
  void begin(Tape& tape) override;
  Eval eval(Tape& tape, std::size_t i, double t, const Tensor& x_const, bool need_z) override;
  const BoundParams& bound() const { return bound_; }

 private:
  const ProblemSpec* problem_;
  MLPConfig cfg_;
  const ParameterSet* params_;
  BoundParams bound_;
};

class RnnStepFunction : public StepFunction {
 public:
  RnnStepFunction(const ProblemSpec& problem, const RNNConfig& cfg, const ParameterSet& params);
  void begin(Tape& tape) override;
  Eval eval(Tape& tape, std::size_t i, double t, const Tensor& x_const, bool need_z) override;
  const BoundParams& bound() const { return bound_; }

 private:
  const ProblemSpec* problem_;
  RNNConfig cfg_;
  const ParameterSet* params_;
  BoundParams bound_;
  Tensor hidden_;
};

// The problem's closed-form pair served as a constant evaluator (oracle
// stub for residual-decay checks).
class AnalyticStepFunction : public StepFunction {
 public:
  explicit AnalyticStepFunction(const ProblemSpec& problem) : problem_(&problem) {}
  Eval eval(Tape& tape, std::size_t i, double t, const Tensor& x_const, bool need_z) override;

 private:
  const ProblemSpec* problem_;
};

// Z = (d psi / d x) sigma(t, x) for a scalar net with input (t, x); the
// returned tensor stays on the tape.
Tensor z_from_network(Tape& tape, const ProblemSpec& problem, const MLPConfig& cfg,
                      const BoundParams& params, double t, const Tensor& x_const);

// sum over local time losses of |Y_i - f dt + Z dW - Y_{i+1}|^2 plus the
// terminal mismatch |Y_N - g|^2.
LossResult ldbsde_loss(const ProblemSpec& problem, const TimeGrid& grid, const PathBatch& paths,
                       const BrownianBatch& brownian, StepFunction& fn, Tape& tape,
                       bool mean_reduction = true);

// local terms |Y_i - Ytilde_i|^2 with Ytilde accumulated from the terminal
// condition; single backward recursion, O(N) per sample.
LossResult ladbsde_loss_backward(const ProblemSpec& problem, const TimeGrid& grid,
                                 const PathBatch& paths, const BrownianBatch& brownian,
                                 StepFunction& fn, Tape& tape, bool mean_reduction = true);

// same loss accumulated by the O(N^2) double loop; differential-testing
// oracle for the backward implementation.
LossResult ladbsde_loss_forward(const ProblemSpec& problem, const TimeGrid& grid,
                                const PathBatch& paths, const BrownianBatch& brownian,
                                StepFunction& fn, Tape& tape, bool mean_reduction = true);

struct SchemeOutput {
  std::vector<Tensor> y;  // {M,1} for i = 0..N
  std::vector<Tensor> z;  // {M,d} for i = 0..N-1
  bool finite = true;
};

// Forward Euler rollout of the terminal-matching scheme: free (Y0, Z0)
// plus one network per interior time step producing Z_i.
SchemeOutput dbsde_rollout(const ProblemSpec& problem, const TimeGrid& grid,
                           const PathBatch& paths, const BrownianBatch& brownian,
                           const BoundParams& all, const MLPConfig& step_cfg,
                           std::vector<std::vector<BatchNormState>>& bn, NetMode mode);

LossResult dbsde_loss(const SchemeOutput& out, const ProblemSpec& problem, const PathBatch& paths,
                      bool mean_reduction = true);

// Everything one scheme needs to train and evaluate: layout, losses,
// gradients, trajectories.
class SchemeModel {
 public:
  SchemeModel(SchemeConfig cfg, ProblemSpec problem, TimeGrid grid);

  const SchemeConfig& config() const { return cfg_; }
  const ProblemSpec& problem() const { return problem_; }
  const TimeGrid& grid() const { return grid_; }
  const std::vector<Segment>& layout() const { return layout_; }
  std::size_t parameter_count() const { return layout_size(layout_); }

  ParameterSet init(std::uint64_t seed, InitDist dist) const;

  struct StepOutput {
    LossBreakdown loss;
    std::vector<double> grad;
    bool finite = true;
  };
  // training mode (batch-norm batch statistics, running stats updated)
  StepOutput loss_and_grad(const ParameterSet& params, const PathBatch& paths,
                           const BrownianBatch& brownian);
  // inference mode, no gradient (validation probes)
  LossBreakdown loss_value(const ParameterSet& params, const PathBatch& paths,
                           const BrownianBatch& brownian);

  struct Trajectories {
    // y[i][m], z[i][m*d+k]; y has N+1 entries, z has N
    std::vector<std::vector<double>> y;
    std::vector<std::vector<double>> z;
    bool finite = true;
  };
  Trajectories evaluate(const ParameterSet& params, const PathBatch& paths,
                        const BrownianBatch& brownian);

  // candidate solution at t = 0 evaluated at x0
  std::pair<double, std::vector<double>> y0_z0(const ParameterSet& params);

  std::vector<std::vector<BatchNormState>>& bn_states() { return bn_; }
  const std::vector<std::vector<BatchNormState>>& bn_states() const { return bn_; }

  const MLPConfig& net_config() const { return net_cfg_; }
  const RNNConfig& rnn_config() const { return rnn_cfg_; }

 private:
  LossResult run_loss(const ParameterSet& params, const PathBatch& paths,
                      const BrownianBatch& brownian, NetMode mode, Tape& tape,
                      BoundParams* bound_out);
  std::unique_ptr<StepFunction> make_step_function(const ParameterSet& params) const;

  SchemeConfig cfg_;
  ProblemSpec problem_;
  TimeGrid grid_;
  MLPConfig net_cfg_;   // single net (LDBSDE/LaDBSDE) or per-step net (DBSDE)
  RNNConfig rnn_cfg_;
  std::vector<Segment> layout_;
  std::vector<std::vector<BatchNormState>> bn_;  // DBSDE: one list per interior step
};

// divergence guard shared by schemes and the training loop
inline constexpr double kDivergenceBound = 1e10;

}  // namespace bsde
