#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "modeconn/network.hpp"
#include "modeconn/tensor.hpp"

namespace modeconn {

/// Inputs with class labels. Every label must be below `num_classes`.
struct LabeledDataset {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return inputs.size(); }
  /// Throws InvalidArgument on length mismatch or out-of-range labels.
  void validate() const;
  /// Indices of examples labeled `y`, in dataset order.
  std::vector<std::size_t> indices_of(std::size_t y) const;
};

/// -log softmax(logits)[y] via max-shifted log-sum-exp.
double cross_entropy(const Tensor& logits, std::size_t y);
/// d cross_entropy / d logits = softmax(logits) - onehot(y).
Tensor cross_entropy_logit_grad(const Tensor& logits, std::size_t y);
Tensor softmax(const Tensor& logits);
/// Index of the largest element; ties go to the smallest index.
std::size_t argmax(const Tensor& values);

/// Cross-entropy of the network's prediction for `x` against class `y`.
double loss_at(const Network& net, const Tensor& x, std::size_t y);

struct LossGradient {
  double loss = 0.0;
  Tensor logits;
  Tensor grad;
};

/// Cross-entropy and its gradient with respect to the input in one pass.
LossGradient loss_and_input_gradient(const Network& net, const Tensor& x, std::size_t y);
Tensor input_gradient(const Network& net, const Tensor& x, std::size_t y);

struct BatchGradient {
  double mean_loss = 0.0;
  ParamSet grads;
};

/// Mean over `batch` (indices into `data`) of the cross-entropy parameter
/// gradient. Per-sample gradients are summed in fixed-size chunks in index
/// order so the result does not depend on the worker count.
BatchGradient param_gradient(const Network& net, const LabeledDataset& data,
                             std::span<const std::size_t> batch);

double accuracy(const Network& net, const LabeledDataset& data);

}  // namespace modeconn
