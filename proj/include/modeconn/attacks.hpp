#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "modeconn/network.hpp"
#include "modeconn/tensor.hpp"

namespace modeconn {

enum class AttackKind { fgsm, bim, pgd, deepfool, cw, targeted_opt };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

struct DataRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Settings of the targeted optimization attack.
struct TargetedConfig {
  double lr = 0.005;
  std::size_t iters = 512;
  double lambda_dev = 0.1;
  double lambda_hf = 1e-8;
  /// Cross-entropy toward the target that counts as success.
  double loss_threshold = 0.01;
  std::optional<DataRange> clamp = DataRange{};
};

struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  double epsilon = 0.1;
  std::size_t steps = 10;
  double step_size = 0.01;
  /// C&W trade-off; nullopt runs the binary search over [1e-3, 1e2].
  std::optional<double> cw_c;
  std::size_t cw_steps = 100;
  double cw_lr = 0.01;
  std::size_t cw_search_steps = 5;
  std::size_t deepfool_max_iters = 50;
  double deepfool_overshoot = 0.02;
  TargetedConfig targeted{};
  DataRange range{};

  void validate() const;
};

struct AdversarialExample {
  AttackKind kind = AttackKind::fgsm;
  Tensor source;
  Tensor adversarial;
  std::size_t source_class = 0;
  std::size_t predicted_class = 0;
  std::optional<std::size_t> target_class;
  double linf = 0.0;
  double l2 = 0.0;
  bool success = false;
};

/// x + epsilon * sign(grad), clamped to the data range.
AdversarialExample fgsm(const Network& net, const Tensor& x, std::size_t y, double epsilon,
                        DataRange range = {});

/// Iterated signed steps; every iterate is clipped into the epsilon-ball around
/// x and into the data range.
AdversarialExample bim(const Network& net, const Tensor& x, std::size_t y, double epsilon,
                       double step_size, std::size_t steps, DataRange range = {});

/// BIM from a uniform random start inside the epsilon-ball.
AdversarialExample pgd(const Network& net, const Tensor& x, std::size_t y, double epsilon,
                       double step_size, std::size_t steps, std::uint64_t seed,
                       DataRange range = {});

/// Linearized closest-boundary steps on logit differences until the predicted
/// class changes; the accumulated perturbation is scaled by 1 + overshoot.
/// `range` clamps the candidate when set.
AdversarialExample deepfool(const Network& net, const Tensor& x, std::size_t max_iters = 50,
                            double overshoot = 0.02, std::optional<DataRange> range = DataRange{});

/// Untargeted Carlini-Wagner L2 with kappa = 0, optimized by Adam in tanh
/// space. With `c` unset, a log-scale binary search over [1e-3, 1e2] picks it.
/// Returns the successful iterate with the smallest L2 perturbation.
AdversarialExample cw(const Network& net, const Tensor& x, std::size_t y, std::optional<double> c,
                      std::size_t steps, double lr, std::size_t search_steps = 5);

/// Adam on cross-entropy toward `target` + lambda_dev * MSE(x, source) +
/// lambda_hf * hf_penalty(x). Success means the target loss is at most
/// `loss_threshold`.
AdversarialExample targeted_optimization(const Network& net, const Tensor& source,
                                         std::size_t source_class, std::size_t target,
                                         const TargetedConfig& cfg);

/// Dispatches on cfg.kind. `target` is used by targeted_opt only; `seed` by pgd.
AdversarialExample run_attack(const Network& net, const Tensor& x, std::size_t y,
                              const AttackConfig& cfg, std::uint64_t seed,
                              std::optional<std::size_t> target = std::nullopt);

}  // namespace modeconn
