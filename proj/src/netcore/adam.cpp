#include "modeconn/adam.hpp"

#include <cmath>

#include "modeconn/errors.hpp"

namespace modeconn {

void adam_step(AdamState& state, std::span<const double> grad, const AdamConfig& cfg,
               std::span<double> step) {
  if (state.m.size() != grad.size() || state.v.size() != grad.size() || step.size() != grad.size())
    throw ShapeError("adam state has " + std::to_string(state.m.size()) + " entries, gradient " +
                     std::to_string(grad.size()));
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    step[i] = -cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

Tensor adam_step(AdamState& state, const Tensor& grad, const AdamConfig& cfg) {
  if (state.m.empty() && state.t == 0) state = AdamState(grad.size());
  Tensor step(grad.shape());
  adam_step(state, grad.data(), cfg, step.data());
  return step;
}

}  // namespace modeconn
