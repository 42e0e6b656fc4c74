#include "clreg/strategies.hpp"

#include <algorithm>
#include <cmath>

#include "clreg/errors.hpp"

namespace clreg {

ImportanceMap make_importance_map(const ParamVector& params) {
  ImportanceMap map;
  map.omega = zeros_like(params);
  map.anchor = zeros_like(params);
  map.has_anchor = false;
  return map;
}

PenaltyResult penalty_and_grad(const ImportanceMap& map, const ParamVector& params,
                               double lambda) {
  PenaltyResult out;
  out.grad = zeros_like(params);
  if (!map.has_anchor || lambda == 0.0) return out;
  check_same_shape(map.omega, params);
  double penalty = 0.0;
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double diff = params.values[i] - map.anchor.values[i];
    penalty += map.omega.values[i] * diff * diff;
    out.grad.values[i] = 2.0 * lambda * map.omega.values[i] * diff;
  }
  out.penalty = lambda * penalty;
  return out;
}

// -------------------------------------------------------------------------

EwcState make_ewc_state(const ParamVector& params, double gamma, std::size_t n_fisher) {
  EwcState s;
  s.running_fisher = zeros_like(params);
  s.gamma = gamma;
  s.n_fisher = n_fisher;
  return s;
}

ParamVector ewc_estimate_fisher(const ClassifierModel& model, const Batch& data,
                                std::size_t n_fisher, Rng& rng) {
  if (data.size() == 0) throw invalid_input("ewc_estimate_fisher: empty data");
  if (n_fisher == 0) throw invalid_input("ewc_estimate_fisher: n_fisher must be >= 1");

  std::vector<std::size_t> picks;
  picks.reserve(n_fisher);
  if (n_fisher <= data.size()) {
    std::vector<std::size_t> indices(data.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    shuffle(indices, rng);
    picks.assign(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n_fisher));
  } else {
    for (std::size_t i = 0; i < n_fisher; ++i) picks.push_back(rng.index(data.size()));
  }

  // batch size 1 per sample: square each gradient before averaging
  ParamVector fisher = zeros_like(model.params);
  Batch one;
  one.inputs = Matrix(1, data.inputs.cols);
  one.labels.resize(1);
  for (std::size_t pick : picks) {
    for (std::size_t j = 0; j < data.inputs.cols; ++j) one.inputs(0, j) = data.inputs(pick, j);
    one.labels[0] = data.labels[pick];
    const ParamVector g = nll_loss_and_grad(model, one).grad;
    for (std::size_t i = 0; i < fisher.values.size(); ++i) {
      fisher.values[i] += g.values[i] * g.values[i];
    }
  }
  scale(fisher, 1.0 / static_cast<double>(picks.size()));
  return fisher;
}

void ewc_task_end(EwcState& state, const ParamVector& new_fisher,
                  const ParamVector& params, ImportanceMap& map) {
  check_same_shape(state.running_fisher, new_fisher);
  for (std::size_t i = 0; i < state.running_fisher.values.size(); ++i) {
    state.running_fisher.values[i] =
        state.gamma * state.running_fisher.values[i] + new_fisher.values[i];
  }
  map.omega = state.running_fisher;
  map.anchor = params;
  map.has_anchor = true;
}

// -------------------------------------------------------------------------

SiTaskState make_si_state(const ParamVector& params, double xi_damp) {
  if (xi_damp <= 0.0) throw invalid_input("make_si_state: xi_damp must be > 0");
  SiTaskState s;
  s.w = zeros_like(params);
  s.theta_start = params;
  s.xi_damp = xi_damp;
  return s;
}

void si_accumulate_step(SiTaskState& state, const StepRecord& step) {
  check_same_shape(state.w, step.grad);
  check_same_shape(state.w, step.delta);
  for (std::size_t i = 0; i < state.w.values.size(); ++i) {
    state.w.values[i] -= step.grad.values[i] * step.delta.values[i];
  }
}

void si_task_end(SiTaskState& state, ImportanceMap& map, const ParamVector& params) {
  check_same_shape(state.w, params);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double delta = params.values[i] - state.theta_start.values[i];
    const double w_pos = std::max(state.w.values[i], 0.0);
    map.omega.values[i] += w_pos / (delta * delta + state.xi_damp);
  }
  map.anchor = params;
  map.has_anchor = true;
  fill(state.w, 0.0);
  state.theta_start = params;
}

// -------------------------------------------------------------------------

void mas_task_end(const ClassifierModel& model, const Batch& data, ImportanceMap& map,
                  const ParamVector& params) {
  if (data.size() == 0) throw invalid_input("mas_task_end: empty data");
  const auto grads = per_sample_output_norm_grads(model, data);
  const double n = static_cast<double>(grads.size());
  for (const auto& g : grads) {
    for (std::size_t i = 0; i < map.omega.values.size(); ++i) {
      map.omega.values[i] += std::fabs(g.values[i]) / n;
    }
  }
  map.anchor = params;
  map.has_anchor = true;
}

// -------------------------------------------------------------------------

StrategyKind strategy_from_name(const std::string& name) {
  if (name == "naive") return StrategyKind::naive;
  if (name == "ewc") return StrategyKind::ewc;
  if (name == "si") return StrategyKind::si;
  if (name == "mas") return StrategyKind::mas;
  throw config_error("unknown strategy: " + name);
}

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::naive: return "naive";
    case StrategyKind::ewc: return "ewc";
    case StrategyKind::si: return "si";
    case StrategyKind::mas: return "mas";
  }
  return "naive";
}

ContinualStrategy::ContinualStrategy(StrategyKind kind, StrategyHyper hyper,
                                     const ParamVector& params)
    : kind_(kind),
      hyper_(hyper),
      map_(make_importance_map(params)),
      ewc_(make_ewc_state(params, hyper.gamma, hyper.n_fisher)),
      si_(make_si_state(params, hyper.xi_damp)) {}

void ContinualStrategy::task_start(const ParamVector& params) {
  if (kind_ == StrategyKind::si) {
    fill(si_.w, 0.0);
    si_.theta_start = params;
  }
}

PenaltyResult ContinualStrategy::penalty_and_grad(const ParamVector& params) const {
  if (kind_ == StrategyKind::naive) {
    PenaltyResult out;
    out.grad = zeros_like(params);
    return out;
  }
  return clreg::penalty_and_grad(map_, params, hyper_.lambda);
}

void ContinualStrategy::observe_step(const StepRecord& step) {
  if (kind_ == StrategyKind::si) si_accumulate_step(si_, step);
}

void ContinualStrategy::task_end(const ClassifierModel& model, const Batch& train_data,
                                 Rng& rng) {
  switch (kind_) {
    case StrategyKind::naive:
      break;
    case StrategyKind::ewc: {
      const ParamVector fisher = ewc_estimate_fisher(model, train_data, ewc_.n_fisher, rng);
      ewc_task_end(ewc_, fisher, model.params, map_);
      break;
    }
    case StrategyKind::si:
      si_task_end(si_, map_, model.params);
      break;
    case StrategyKind::mas:
      mas_task_end(model, train_data, map_, model.params);
      break;
  }
}

ParamVector ContinualStrategy::standalone_importance(const ClassifierModel& model,
                                                     const Batch& data) const {
  switch (kind_) {
    case StrategyKind::naive: {
      ParamVector ones = zeros_like(model.params);
      fill(ones, 1.0);
      return ones;
    }
    case StrategyKind::ewc:
    case StrategyKind::si: {
      // full-data empirical Fisher diagonal, no subsampling
      const auto grads = per_sample_grads(model, data);
      ParamVector est = zeros_like(model.params);
      for (const auto& g : grads) {
        for (std::size_t i = 0; i < est.values.size(); ++i) {
          est.values[i] += g.values[i] * g.values[i];
        }
      }
      scale(est, 1.0 / static_cast<double>(grads.size()));
      return est;
    }
    case StrategyKind::mas: {
      const auto grads = per_sample_output_norm_grads(model, data);
      ParamVector est = zeros_like(model.params);
      for (const auto& g : grads) {
        for (std::size_t i = 0; i < est.values.size(); ++i) {
          est.values[i] += std::fabs(g.values[i]);
        }
      }
      scale(est, 1.0 / static_cast<double>(grads.size()));
      return est;
    }
  }
  return zeros_like(model.params);
}

}  // namespace clreg
