#include "modeconn/synth.hpp"

#include <cmath>
#include <limits>

#include "modeconn/adam.hpp"
#include "modeconn/connector.hpp"
#include "modeconn/loss.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

void FvoConfig::validate() const {
  if (!(init_std > 0.0)) throw ConfigError("init_std", "must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be nonnegative");
  if (max_iters == 0) throw ConfigError("max_iters", "must be positive");
  if (!(loss_threshold > 0.0)) throw ConfigError("loss_threshold", "must be positive");
  if (!(hf_weight >= 0.0)) throw ConfigError("hf_weight", "must be nonnegative");
}

double surrogate_objective(const Tensor& logits, std::size_t y) {
  if (y >= logits.size()) throw InvalidArgument("surrogate_objective: class out of range");
  const double norm = norm_l2(logits);
  if (norm == 0.0) return 0.0;
  const double cosine = logits[y] / norm;
  return 0.5 * logits[y] * std::sqrt(std::max(0.0, cosine));
}

Tensor surrogate_objective_gradient(const Tensor& logits, std::size_t y) {
  if (y >= logits.size()) throw InvalidArgument("surrogate_objective: class out of range");
  Tensor g(logits.shape());
  const double norm = norm_l2(logits);
  const double zy = logits[y];
  if (norm == 0.0 || zy <= 0.0) {
    g[y] = 0.5;
    return g;
  }
  // S = 1/2 zy^(3/2) |z|^(-1/2)
  const double common = -0.25 * std::pow(zy, 1.5) * std::pow(norm, -2.5);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = common * logits[i];
  g[y] += 0.75 * std::sqrt(zy / norm);
  return g;
}

FvoResult generate_optimal_input(const Network& net, std::size_t y, const FvoConfig& cfg,
                                 std::uint64_t seed) {
  cfg.validate();
  if (y >= net.num_classes()) throw InvalidArgument("generate_optimal_input: class out of range");
  Rng rng(seed);
  Tensor x(net.input_shape());
  for (auto& v : x.data()) v = rng.normal(0.0, cfg.init_std);

  const bool image = x.shape().size() == 3;
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  AdamState state(x.size());
  FvoResult best{x, std::numeric_limits<double>::infinity(), 0};

  for (std::size_t it = 0; it <= cfg.max_iters; ++it) {
    const auto trace = net.forward_trace(x);
    const double ce = cross_entropy(trace.logits(), y);
    if (!std::isfinite(ce)) break;
    if (ce < best.loss) best = {x, ce, it};
    if (ce <= cfg.loss_threshold) return {x, ce, it};
    if (it == cfg.max_iters) break;

    const Tensor logit_grad = cfg.objective == FvoObjective::cross_entropy
                                  ? cross_entropy_logit_grad(trace.logits(), y)
                                  : surrogate_objective_gradient(trace.logits(), y) * -1.0;
    Tensor grad = net.backward(trace, logit_grad);
    if (cfg.weight_decay > 0.0) axpy(cfg.weight_decay, x, grad);
    if (image && cfg.hf_weight > 0.0) axpy(cfg.hf_weight, hf_penalty_gradient(x), grad);
    x += adam_step(state, grad, adam);
  }
  throw ThresholdNotReached("optimal input for class " + std::to_string(y) + " stalled at loss " +
                                std::to_string(best.loss) + " > " + std::to_string(cfg.loss_threshold),
                            std::move(best));
}

std::pair<FvoResult, FvoResult> generate_diverse_pair(const Network& net, std::size_t y,
                                                      const FvoConfig& cfg, std::uint64_t seed_first,
                                                      std::uint64_t seed_second) {
  if (seed_first == seed_second) throw InvalidArgument("generate_diverse_pair: seeds must differ");
  FvoConfig plain = cfg;
  plain.hf_weight = 0.0;
  auto first = generate_optimal_input(net, y, plain, seed_first);
  auto second = generate_optimal_input(net, y, cfg, seed_second);
  return {std::move(first), std::move(second)};
}

}  // namespace modeconn
