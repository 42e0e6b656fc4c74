#include "clreg/optim.hpp"

#include <cmath>

#include "clreg/errors.hpp"

namespace clreg {

StepRecord sgd_step(ParamVector& params, const ParamVector& grad, double eta) {
  check_same_shape(params, grad);
  if (eta <= 0.0) throw invalid_input("sgd_step: eta must be > 0");
  StepRecord rec;
  rec.grad = grad;
  rec.delta = zeros_like(params);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double d = -eta * grad.values[i];
    rec.delta.values[i] = d;
    params.values[i] += d;
  }
  return rec;
}

AdamState make_adam_state(const ParamVector& params, double eta) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  s.eta = eta;
  return s;
}

StepRecord adam_step(ParamVector& params, const ParamVector& grad, AdamState& state) {
  check_same_shape(params, grad);
  check_same_shape(params, state.m);
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  StepRecord rec;
  rec.grad = grad;
  rec.delta = zeros_like(params);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double g = grad.values[i];
    double& m = state.m.values[i];
    double& v = state.v.values[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    const double d = -state.eta * m_hat / (std::sqrt(v_hat) + state.eps);
    rec.delta.values[i] = d;
    params.values[i] += d;
  }
  return rec;
}

}  // namespace clreg
