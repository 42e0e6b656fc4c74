#pragma once

#include "clreg/param_vector.hpp"

namespace clreg {

// One optimizer step, exposed so SI can accumulate its path integral from
// (gradient, parameter delta) pairs.
struct StepRecord {
  ParamVector grad;   // g_t as given to the optimizer
  ParamVector delta;  // theta_{t+1} - theta_t
};

// params <- params - eta * grad
StepRecord sgd_step(ParamVector& params, const ParamVector& grad, double eta);

struct AdamState {
  ParamVector m;  // first moment
  ParamVector v;  // second moment, entries >= 0
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double eta = 1e-3;
};

AdamState make_adam_state(const ParamVector& params, double eta);

// Bias-corrected Adam: params <- params - eta * m_hat / (sqrt(v_hat) + eps)
StepRecord adam_step(ParamVector& params, const ParamVector& grad, AdamState& state);

}  // namespace clreg
