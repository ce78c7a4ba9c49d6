#include "modeconn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "modeconn/errors.hpp"
#include "modeconn/parallel.hpp"

namespace modeconn {

void LabeledDataset::validate() const {
  if (inputs.size() != labels.size())
    throw InvalidArgument("dataset has " + std::to_string(inputs.size()) + " inputs but " +
                          std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= num_classes)
      throw InvalidArgument("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                            " is not below num_classes " + std::to_string(num_classes));
}

std::vector<std::size_t> LabeledDataset::indices_of(std::size_t y) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == y) out.push_back(i);
  return out;
}

namespace {

void check_class(const Tensor& logits, std::size_t y) {
  if (logits.shape().size() != 1) throw ShapeError("logits must be a vector");
  if (y >= logits.size())
    throw InvalidArgument("class " + std::to_string(y) + " out of range for " +
                          std::to_string(logits.size()) + " logits");
}

double log_sum_exp(const Tensor& logits) {
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  double s = 0.0;
  for (double v : logits.data()) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

double cross_entropy(const Tensor& logits, std::size_t y) {
  check_class(logits, y);
  return std::max(0.0, log_sum_exp(logits) - logits[y]);
}

Tensor softmax(const Tensor& logits) {
  const double lse = log_sum_exp(logits);
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

Tensor cross_entropy_logit_grad(const Tensor& logits, std::size_t y) {
  check_class(logits, y);
  Tensor g = softmax(logits);
  g[y] -= 1.0;
  return g;
}

std::size_t argmax(const Tensor& values) {
  if (values.empty()) throw InvalidArgument("argmax of empty tensor");
  return static_cast<std::size_t>(
      std::distance(values.data().begin(), std::max_element(values.data().begin(), values.data().end())));
}

double loss_at(const Network& net, const Tensor& x, std::size_t y) {
  return cross_entropy(net.forward(x), y);
}

LossGradient loss_and_input_gradient(const Network& net, const Tensor& x, std::size_t y) {
  const auto trace = net.forward_trace(x);
  LossGradient out;
  out.logits = trace.logits();
  out.loss = cross_entropy(out.logits, y);
  out.grad = net.backward(trace, cross_entropy_logit_grad(out.logits, y));
  return out;
}

Tensor input_gradient(const Network& net, const Tensor& x, std::size_t y) {
  return loss_and_input_gradient(net, x, y).grad;
}

BatchGradient param_gradient(const Network& net, const LabeledDataset& data,
                             std::span<const std::size_t> batch) {
  if (batch.empty()) throw InvalidArgument("param_gradient: empty batch");
  constexpr std::size_t kChunk = 8;
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;

  struct Partial {
    double loss = 0.0;
    ParamSet grads;
  };
  auto partials = parallel_map<Partial>(chunks, [&](std::size_t c) {
    Partial part{0.0, zeros_like(net.params())};
    const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
    for (std::size_t k = c * kChunk; k < end; ++k) {
      const std::size_t i = batch[k];
      if (i >= data.size()) throw InvalidArgument("batch index out of range");
      const auto trace = net.forward_trace(data.inputs[i]);
      part.loss += cross_entropy(trace.logits(), data.labels[i]);
      net.backward(trace, cross_entropy_logit_grad(trace.logits(), data.labels[i]), &part.grads);
    }
    return part;
  });

  BatchGradient out{0.0, zeros_like(net.params())};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& part : partials) {
    out.mean_loss += part.loss;
    for (std::size_t l = 0; l < out.grads.size(); ++l) {
      if (out.grads[l].weight.empty()) continue;
      out.grads[l].weight += part.grads[l].weight;
      out.grads[l].bias += part.grads[l].bias;
    }
  }
  out.mean_loss *= scale;
  for (auto& g : out.grads) {
    g.weight *= scale;
    g.bias *= scale;
  }
  return out;
}

double accuracy(const Network& net, const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  const auto hits = parallel_map<int>(data.size(), [&](std::size_t i) {
    return argmax(net.forward(data.inputs[i])) == data.labels[i] ? 1 : 0;
  });
  std::size_t correct = 0;
  for (int h : hits) correct += static_cast<std::size_t>(h);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace modeconn
