#pragma once

#include <cstdint>
#include <string>

#include "clreg/optim.hpp"
#include "clreg/param_vector.hpp"
#include "clreg/rng.hpp"
#include "clreg/tensor_net.hpp"

namespace clreg {

// Per-parameter nonnegative importance plus the anchor point of the previous
// task; the pair that defines the quadratic penalty.
struct ImportanceMap {
  ParamVector omega;
  ParamVector anchor;
  bool has_anchor = false;
};

ImportanceMap make_importance_map(const ParamVector& params);

struct PenaltyResult {
  double penalty = 0.0;
  ParamVector grad;  // added to the task gradient during training
};

// penalty = lambda * sum_k omega_k (theta_k - anchor_k)^2
// grad    = 2 lambda * omega .* (theta - anchor)
// Before the first task boundary (no anchor) both are zero.
PenaltyResult penalty_and_grad(const ImportanceMap& map, const ParamVector& params,
                               double lambda);

// -------------------------------------------------------------------------
// Online EWC

struct EwcState {
  ParamVector running_fisher;  // F*, decayed accumulation, entries >= 0
  double gamma = 0.9;
  std::size_t n_fisher = 500;
};

EwcState make_ewc_state(const ParamVector& params, double gamma, std::size_t n_fisher);

// Diagonal empirical Fisher: mean of squared per-sample NLL gradients at the
// observed labels, estimated on n_fisher samples (without replacement when
// n_fisher <= data size, with replacement otherwise).
ParamVector ewc_estimate_fisher(const ClassifierModel& model, const Batch& data,
                                std::size_t n_fisher, Rng& rng);

// F* <- gamma * F* + F_new; omega <- F*; anchor <- params
void ewc_task_end(EwcState& state, const ParamVector& new_fisher,
                  const ParamVector& params, ImportanceMap& map);

// -------------------------------------------------------------------------
// Synaptic Intelligence

struct SiTaskState {
  ParamVector w;            // running path integral of the current task
  ParamVector theta_start;  // theta at task start
  double xi_damp = 0.1;
};

SiTaskState make_si_state(const ParamVector& params, double xi_damp);

// w <- w - grad .* delta; feed the task-loss gradient only, never the
// penalty contribution.
void si_accumulate_step(SiTaskState& state, const StepRecord& step);

// omega += max(w, 0) / ((theta - theta_start)^2 + xi); anchor <- theta;
// w and theta_start reset for the next task.
void si_task_end(SiTaskState& state, ImportanceMap& map, const ParamVector& params);

// -------------------------------------------------------------------------
// Memory Aware Synapses

// omega += mean_i |d ||F(x_i)||^2 / d theta|; labels unused; anchor <- params
void mas_task_end(const ClassifierModel& model, const Batch& data, ImportanceMap& map,
                  const ParamVector& params);

// -------------------------------------------------------------------------
// Uniform lifecycle used by the runner

enum class StrategyKind { naive, ewc, si, mas };

StrategyKind strategy_from_name(const std::string& name);
std::string strategy_name(StrategyKind kind);

struct StrategyHyper {
  double lambda = 0.0;
  double gamma = 0.9;
  double xi_damp = 0.1;
  std::size_t n_fisher = 500;
};

class ContinualStrategy {
 public:
  ContinualStrategy(StrategyKind kind, StrategyHyper hyper, const ParamVector& params);

  StrategyKind kind() const { return kind_; }
  double lambda() const { return hyper_.lambda; }

  void task_start(const ParamVector& params);
  PenaltyResult penalty_and_grad(const ParamVector& params) const;
  // step.grad must be the task-loss gradient, step.delta the applied update
  void observe_step(const StepRecord& step);
  void task_end(const ClassifierModel& model, const Batch& train_data, Rng& rng);

  const ImportanceMap& importance() const { return map_; }

  // This task's own importance estimate at the given parameters, before any
  // training on it; used by the gradient-interference probe to rank
  // parameters for the incoming task. SI has no pre-training path integral,
  // so it falls back to the squared-gradient signal its integral tracks.
  ParamVector standalone_importance(const ClassifierModel& model, const Batch& data) const;

 private:
  StrategyKind kind_;
  StrategyHyper hyper_;
  ImportanceMap map_;
  EwcState ewc_;
  SiTaskState si_;
};

}  // namespace clreg
