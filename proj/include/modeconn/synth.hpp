#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>

#include "modeconn/errors.hpp"
#include "modeconn/network.hpp"
#include "modeconn/tensor.hpp"

namespace modeconn {

enum class FvoObjective { cross_entropy, surrogate };

struct FvoConfig {
  double init_std = 0.01;
  double lr = 0.05;
  double weight_decay = 1e-7;
  std::size_t max_iters = 4096;
  double loss_threshold = 0.0005;
  /// Weight of hf_penalty; 2.5e-7 is the diversity setting.
  double hf_weight = 0.0;
  FvoObjective objective = FvoObjective::cross_entropy;

  void validate() const;
};

/// 1/2 * (logits . t) * sqrt(max(0, cos(logits, t))) with t = onehot(y).
/// Zero logits give 0.
double surrogate_objective(const Tensor& logits, std::size_t y);
/// Gradient of surrogate_objective with respect to the logits. Where the cosine
/// is not positive the objective is flat; there the gradient of the dot
/// product term, 1/2 * e_y, is returned so ascent can leave the dead region.
Tensor surrogate_objective_gradient(const Tensor& logits, std::size_t y);

struct FvoResult {
  Tensor input;
  double loss = 0.0;  // cross-entropy for the target class
  std::size_t iterations = 0;
};

class ThresholdNotReached : public Error {
 public:
  ThresholdNotReached(const std::string& what, FvoResult best)
      : Error("threshold_not_reached", what), best_(std::move(best)) {}
  const FvoResult& best() const noexcept { return best_; }

 private:
  FvoResult best_;
};

/// Optimizes Gaussian noise N(0, init_std^2) with Adam until the
/// cross-entropy for `y` is at most `loss_threshold`, whichever objective
/// drives the updates. Weight decay is added to the input gradient. Pure in
/// (net, y, cfg, seed). Throws ThresholdNotReached carrying the best input.
FvoResult generate_optimal_input(const Network& net, std::size_t y, const FvoConfig& cfg,
                                 std::uint64_t seed);

/// The first input is optimized without the high-frequency penalty, the second
/// with `cfg.hf_weight`.
std::pair<FvoResult, FvoResult> generate_diverse_pair(const Network& net, std::size_t y,
                                                      const FvoConfig& cfg, std::uint64_t seed_first,
                                                      std::uint64_t seed_second);

}  // namespace modeconn
