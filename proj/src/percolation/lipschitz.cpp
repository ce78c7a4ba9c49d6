#include <cmath>

#include "modeconn/errors.hpp"
#include "modeconn/percolation.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

namespace {

/// The layer alone, bias zeroed, followed by a flatten when its output is not
/// already a vector.
Network linear_part(const Network& net, std::size_t index) {
  const LayerSpec& spec = net.layers()[index];
  std::vector<LayerSpec> layers{spec};
  if (spec.kind == LayerKind::conv2d) layers.push_back(LayerSpec::flatten());
  Network op(net.layer_input_shape(index), layers);
  op.params()[0].weight = net.params()[index].weight;
  op.params()[0].bias = Tensor(net.params()[index].bias.shape());
  return op;
}

}  // namespace

double layer_operator_norm(const Network& net, std::size_t index, const PowerIterationConfig& cfg) {
  if (index >= net.layers().size()) throw InvalidArgument("layer_operator_norm: layer index out of range");
  if (!net.layers()[index].has_params()) return 1.0;
  const Network op = linear_part(net, index);

  Rng rng = Rng(cfg.seed).split(index);
  Tensor v(op.input_shape());
  for (auto& x : v.data()) x = rng.normal();
  v *= 1.0 / norm_l2(v);

  double estimate = 0.0;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const auto trace = op.forward_trace(v);
    const Tensor w = op.backward(trace, trace.logits());  // A^T A v
    const double rayleigh = dot(v, w);                    // |A v|^2 for unit v
    const double wn = norm_l2(w);
    if (wn == 0.0) return 0.0;
    const double next = std::sqrt(std::max(rayleigh, 0.0));
    if (it > 0 && std::abs(next - estimate) <= cfg.tol * next) return next;
    estimate = next;
    v = w * (1.0 / wn);
  }
  throw OptimizationError("power iteration for layer " + std::to_string(index) +
                          " did not converge in " + std::to_string(cfg.max_iters) + " iterations");
}

LipschitzReport lipschitz_bound(const Network& net, double final_activation,
                                const PowerIterationConfig& cfg) {
  if (!(final_activation >= 0.0)) throw InvalidArgument("lipschitz_bound: final activation constant must be nonnegative");
  LipschitzReport report;
  report.final_activation = final_activation;
  report.bound = final_activation;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const double norm = layer_operator_norm(net, l, cfg);
    report.layer_norms.push_back(norm);
    report.bound *= norm;
  }
  return report;
}

double epsilon_grid(double lipschitz, double delta, double delta_prime) {
  if (!(lipschitz > 0.0)) throw InvalidArgument("epsilon_grid: Lipschitz constant must be positive");
  if (!(delta_prime > 0.0)) throw InvalidArgument("epsilon_grid: delta_prime must be positive");
  if (!(delta_prime < delta)) throw InvalidArgument("epsilon_grid: delta_prime must be below delta");
  return (delta - delta_prime) / lipschitz;
}

double cube_side(double epsilon, std::size_t dim) {
  if (dim == 0) throw InvalidArgument("cube_side: dimension must be positive");
  return epsilon / std::sqrt(static_cast<double>(dim));
}

}  // namespace modeconn
