#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modeconn/tensor.hpp"

namespace modeconn {

enum class LayerKind { dense, conv2d, relu, tanh, flatten, maxpool2d };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// One layer of a feed-forward classifier. Dense layers map a rank-1 input of
/// width `in` to width `out`; conv2d maps (in, H, W) to (out, H', W') with a
/// square `kernel`, `stride` and no padding; maxpool2d uses non-overlapping
/// `kernel` x `kernel` windows.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride = 1);
  static LayerSpec relu();
  static LayerSpec tanh();
  static LayerSpec flatten();
  static LayerSpec maxpool2d(std::size_t kernel = 2);

  bool has_params() const noexcept {
    return kind == LayerKind::dense || kind == LayerKind::conv2d;
  }
  bool operator==(const LayerSpec&) const = default;
};

/// Weight and bias of one layer; both empty for parameter-free layers.
/// Dense weight is (out, in); conv weight is (out, in, kernel, kernel).
struct LayerParams {
  Tensor weight;
  Tensor bias;
  bool operator==(const LayerParams&) const = default;
};

using ParamSet = std::vector<LayerParams>;

ParamSet zeros_like(const ParamSet& params);
std::size_t param_count(const ParamSet& params);
std::vector<double> flatten(const ParamSet& params);
void unflatten(std::span<const double> flat, ParamSet& params);

/// Activations recorded by a forward pass: entry 0 is the input, entry l+1 the
/// output of layer l. Backward passes consume it.
struct ForwardTrace {
  std::vector<Tensor> activations;
  const Tensor& logits() const { return activations.back(); }
};

class Network {
 public:
  /// Validates that the layer shapes compose and that the final output is a
  /// vector. Parameters start at zero; call `initialize` for random weights.
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  /// conv 3x3x16, relu, pool2, conv 3x3x32, relu, pool2, flatten, dense 128,
  /// relu, dense num_classes.
  static Network reference_cnn(const Shape& input_shape, std::size_t num_classes);
  /// flatten, dense hidden, relu, dense hidden, relu, dense num_classes.
  static Network reference_mlp(const Shape& input_shape, std::size_t num_classes,
                               std::size_t hidden = 128);

  /// Weights uniform in +-gain/sqrt(fan_in), biases in +-1/sqrt(fan_in).
  /// gain = sqrt(6) gives the variance-preserving scale for ReLU stacks.
  void initialize(std::uint64_t seed, double gain = 1.0);

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  /// Output shape of every layer.
  const std::vector<Shape>& layer_shapes() const noexcept { return shapes_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }
  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t seed) noexcept { seed_ = seed; }

  Tensor forward(const Tensor& x) const;
  ForwardTrace forward_trace(const Tensor& x) const;

  /// Vector-Jacobian product: propagates `grad_logits` back to the input.
  /// When `param_grads` is non-null the parameter gradients are accumulated
  /// into it (it must be shaped like `params()`).
  Tensor backward(const ForwardTrace& trace, const Tensor& grad_logits,
                  ParamSet* param_grads = nullptr) const;

  /// Input shape of layer `index`.
  const Shape& layer_input_shape(std::size_t index) const;

 private:
  void check_input(const Tensor& x) const;

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  ParamSet params_;
  std::size_t num_classes_ = 0;
  std::uint64_t seed_ = 0;
};

/// Row-major im2col for a (C, H, W) input: result is (C*k*k, OH*OW).
std::vector<double> im2col(const Tensor& input, std::size_t kernel, std::size_t stride);

}  // namespace modeconn
