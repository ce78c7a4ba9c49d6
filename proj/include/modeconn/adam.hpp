#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "modeconn/tensor.hpp"

namespace modeconn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates plus the step counter.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  bool operator==(const AdamState&) const = default;
};

/// One Adam update with bias correction. Writes the additive step
/// -lr * m_hat / (sqrt(v_hat) + eps) into `step`.
void adam_step(AdamState& state, std::span<const double> grad, const AdamConfig& cfg,
               std::span<double> step);

Tensor adam_step(AdamState& state, const Tensor& grad, const AdamConfig& cfg);

}  // namespace modeconn
