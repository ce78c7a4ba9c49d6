#include "modeconn/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "modeconn/errors.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

std::size_t conv_out(std::size_t size, std::size_t kernel, std::size_t stride) {
  return (size - kernel) / stride + 1;
}

Shape output_shape(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != spec.in)
        throw ShapeError("dense layer expects input (" + std::to_string(spec.in) + "), got " +
                         shape_string(in));
      return {spec.out};
    case LayerKind::conv2d:
      if (in.size() != 3 || in[0] != spec.in)
        throw ShapeError("conv2d expects (" + std::to_string(spec.in) + ",H,W), got " +
                         shape_string(in));
      if (spec.kernel == 0 || spec.stride == 0 || in[1] < spec.kernel || in[2] < spec.kernel)
        throw ShapeError("conv2d kernel does not fit input " + shape_string(in));
      return {spec.out, conv_out(in[1], spec.kernel, spec.stride),
              conv_out(in[2], spec.kernel, spec.stride)};
    case LayerKind::relu:
    case LayerKind::tanh:
      return in;
    case LayerKind::flatten:
      return {shape_size(in)};
    case LayerKind::maxpool2d:
      if (in.size() != 3 || spec.kernel == 0 || in[1] < spec.kernel || in[2] < spec.kernel)
        throw ShapeError("maxpool2d expects (C,H,W) at least the window size, got " +
                         shape_string(in));
      return {in[0], in[1] / spec.kernel, in[2] / spec.kernel};
  }
  throw ShapeError("unknown layer kind");
}

void col2im_add(std::span<const double> col, Tensor& grad_input, std::size_t kernel,
                std::size_t stride, std::size_t oh, std::size_t ow) {
  const auto& s = grad_input.shape();
  const std::size_t channels = s[0], height = s[1], width = s[2];
  const std::size_t positions = oh * ow;
  double* g = grad_input.raw();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ky = 0; ky < kernel; ++ky)
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        const double* row = col.data() + ((c * kernel + ky) * kernel + kx) * positions;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          double* dst = g + (c * height + oy * stride + ky) * width + kx;
          const double* src = row + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) dst[ox * stride] += src[ox];
        }
      }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::flatten: return "flatten";
    case LayerKind::maxpool2d: return "maxpool2d";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::dense, LayerKind::conv2d, LayerKind::relu, LayerKind::tanh,
                 LayerKind::flatten, LayerKind::maxpool2d})
    if (to_string(k) == name) return k;
  throw InvalidArgument("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  return {LayerKind::dense, in, out, 0, 1};
}
LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t stride) {
  return {LayerKind::conv2d, in_channels, out_channels, kernel, stride};
}
LayerSpec LayerSpec::relu() { return {LayerKind::relu, 0, 0, 0, 1}; }
LayerSpec LayerSpec::tanh() { return {LayerKind::tanh, 0, 0, 0, 1}; }
LayerSpec LayerSpec::flatten() { return {LayerKind::flatten, 0, 0, 0, 1}; }
LayerSpec LayerSpec::maxpool2d(std::size_t kernel) {
  return {LayerKind::maxpool2d, 0, 0, kernel, kernel};
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  out.reserve(params.size());
  for (const auto& p : params) {
    LayerParams z;
    if (!p.weight.empty()) z.weight = Tensor(p.weight.shape());
    if (!p.bias.empty()) z.bias = Tensor(p.bias.shape());
    out.push_back(std::move(z));
  }
  return out;
}

std::size_t param_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.weight.size() + p.bias.size();
  return n;
}

std::vector<double> flatten(const ParamSet& params) {
  std::vector<double> flat;
  flat.reserve(param_count(params));
  for (const auto& p : params) {
    flat.insert(flat.end(), p.weight.data().begin(), p.weight.data().end());
    flat.insert(flat.end(), p.bias.data().begin(), p.bias.data().end());
  }
  return flat;
}

void unflatten(std::span<const double> flat, ParamSet& params) {
  if (flat.size() != param_count(params))
    throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " values, expected " +
                     std::to_string(param_count(params)));
  std::size_t off = 0;
  for (auto& p : params) {
    std::copy_n(flat.begin() + off, p.weight.size(), p.weight.data().begin());
    off += p.weight.size();
    std::copy_n(flat.begin() + off, p.bias.size(), p.bias.data().begin());
    off += p.bias.size();
  }
}

std::vector<double> im2col(const Tensor& input, std::size_t kernel, std::size_t stride) {
  const auto& s = input.shape();
  const std::size_t channels = s[0], height = s[1], width = s[2];
  const std::size_t oh = conv_out(height, kernel, stride), ow = conv_out(width, kernel, stride);
  const std::size_t positions = oh * ow;
  std::vector<double> col(channels * kernel * kernel * positions);
  const double* x = input.raw();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ky = 0; ky < kernel; ++ky)
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        double* row = col.data() + ((c * kernel + ky) * kernel + kx) * positions;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const double* src = x + (c * height + oy * stride + ky) * width + kx;
          double* dst = row + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] = src[ox * stride];
        }
      }
  return col;
}

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0)
    throw ShapeError("network input shape must be non-empty");
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  Shape current = input_shape_;
  for (const auto& spec : layers_) {
    current = output_shape(spec, current);
    shapes_.push_back(current);
    LayerParams p;
    if (spec.kind == LayerKind::dense) {
      p.weight = Tensor({spec.out, spec.in});
      p.bias = Tensor({spec.out});
    } else if (spec.kind == LayerKind::conv2d) {
      p.weight = Tensor({spec.out, spec.in, spec.kernel, spec.kernel});
      p.bias = Tensor({spec.out});
    }
    params_.push_back(std::move(p));
  }
  if (current.size() != 1) throw ShapeError("network output must be a vector, got " + shape_string(current));
  num_classes_ = current[0];
}

Network Network::reference_cnn(const Shape& input_shape, std::size_t num_classes) {
  if (input_shape.size() != 3) throw ShapeError("reference CNN expects a (C,H,W) input");
  const std::size_t c = input_shape[0];
  // Two valid 3x3 convolutions each followed by a 2x2 pool.
  const std::size_t h = ((input_shape[1] - 2) / 2 - 2) / 2;
  const std::size_t w = ((input_shape[2] - 2) / 2 - 2) / 2;
  return Network(input_shape, {LayerSpec::conv2d(c, 16, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2),
                               LayerSpec::conv2d(16, 32, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2),
                               LayerSpec::flatten(), LayerSpec::dense(32 * h * w, 128),
                               LayerSpec::relu(), LayerSpec::dense(128, num_classes)});
}

Network Network::reference_mlp(const Shape& input_shape, std::size_t num_classes,
                               std::size_t hidden) {
  const std::size_t in = shape_size(input_shape);
  return Network(input_shape, {LayerSpec::flatten(), LayerSpec::dense(in, hidden), LayerSpec::relu(),
                               LayerSpec::dense(hidden, hidden), LayerSpec::relu(),
                               LayerSpec::dense(hidden, num_classes)});
}

void Network::initialize(std::uint64_t seed, double gain) {
  if (!(gain > 0.0)) throw InvalidArgument("initialize: gain must be positive");
  seed_ = seed;
  const Rng root(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& p = params_[l];
    if (p.weight.empty()) continue;
    const std::size_t fan_in = p.weight.size() / p.weight.shape()[0];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng = root.split(l);
    for (auto& v : p.weight.data()) v = rng.uniform(-gain * bound, gain * bound);
    for (auto& v : p.bias.data()) v = rng.uniform(-bound, bound);
  }
}

const Shape& Network::layer_input_shape(std::size_t index) const {
  return index == 0 ? input_shape_ : shapes_.at(index - 1);
}

void Network::check_input(const Tensor& x) const {
  if (x.shape() != input_shape_)
    throw ShapeError("input shape " + shape_string(x.shape()) + " does not match network input " +
                     shape_string(input_shape_));
}

Tensor Network::forward(const Tensor& x) const { return forward_trace(x).activations.back(); }

ForwardTrace Network::forward_trace(const Tensor& x) const {
  check_input(x);
  ForwardTrace trace;
  trace.activations.reserve(layers_.size() + 1);
  trace.activations.push_back(x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    const Tensor& in = trace.activations.back();
    Tensor out(shapes_[l]);
    switch (spec.kind) {
      case LayerKind::dense: {
        const auto& p = params_[l];
        ConstMatrixMap w(p.weight.raw(), spec.out, spec.in);
        VectorMap(out.raw(), spec.out) =
            w * ConstVectorMap(in.raw(), spec.in) + ConstVectorMap(p.bias.raw(), spec.out);
        break;
      }
      case LayerKind::conv2d: {
        const auto& p = params_[l];
        const std::size_t taps = spec.in * spec.kernel * spec.kernel;
        const std::size_t positions = shapes_[l][1] * shapes_[l][2];
        const auto col = im2col(in, spec.kernel, spec.stride);
        MatrixMap y(out.raw(), spec.out, positions);
        y.noalias() = ConstMatrixMap(p.weight.raw(), spec.out, taps) *
                      ConstMatrixMap(col.data(), taps, positions);
        y.colwise() += ConstVectorMap(p.bias.raw(), spec.out);
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
      case LayerKind::tanh:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
        break;
      case LayerKind::flatten:
        std::copy(in.data().begin(), in.data().end(), out.data().begin());
        break;
      case LayerKind::maxpool2d: {
        const auto& is = in.shape();
        const auto& os = shapes_[l];
        const std::size_t k = spec.kernel;
        for (std::size_t c = 0; c < os[0]; ++c)
          for (std::size_t oy = 0; oy < os[1]; ++oy)
            for (std::size_t ox = 0; ox < os[2]; ++ox) {
              double best = in[(c * is[1] + oy * k) * is[2] + ox * k];
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx)
                  best = std::max(best, in[(c * is[1] + oy * k + ky) * is[2] + ox * k + kx]);
              out[(c * os[1] + oy) * os[2] + ox] = best;
            }
        break;
      }
    }
    trace.activations.push_back(std::move(out));
  }
  return trace;
}

Tensor Network::backward(const ForwardTrace& trace, const Tensor& grad_logits,
                         ParamSet* param_grads) const {
  if (trace.activations.size() != layers_.size() + 1)
    throw InvalidArgument("forward trace does not belong to this network");
  if (grad_logits.shape() != shapes_.back())
    throw ShapeError("logit gradient shape " + shape_string(grad_logits.shape()) +
                     " does not match output " + shape_string(shapes_.back()));
  if (param_grads && param_grads->size() != params_.size())
    throw ShapeError("parameter gradient set does not match network");

  Tensor grad = grad_logits;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& spec = layers_[l];
    const Tensor& in = trace.activations[l];
    Tensor grad_in(in.shape());
    switch (spec.kind) {
      case LayerKind::dense: {
        const auto& p = params_[l];
        ConstMatrixMap w(p.weight.raw(), spec.out, spec.in);
        ConstVectorMap gy(grad.raw(), spec.out);
        VectorMap(grad_in.raw(), spec.in).noalias() = w.transpose() * gy;
        if (param_grads) {
          auto& g = (*param_grads)[l];
          MatrixMap(g.weight.raw(), spec.out, spec.in).noalias() +=
              gy * ConstVectorMap(in.raw(), spec.in).transpose();
          VectorMap(g.bias.raw(), spec.out) += gy;
        }
        break;
      }
      case LayerKind::conv2d: {
        const auto& p = params_[l];
        const std::size_t taps = spec.in * spec.kernel * spec.kernel;
        const std::size_t oh = shapes_[l][1], ow = shapes_[l][2];
        const std::size_t positions = oh * ow;
        ConstMatrixMap gy(grad.raw(), spec.out, positions);
        ConstMatrixMap w(p.weight.raw(), spec.out, taps);
        std::vector<double> grad_col(taps * positions);
        MatrixMap(grad_col.data(), taps, positions).noalias() = w.transpose() * gy;
        col2im_add(grad_col, grad_in, spec.kernel, spec.stride, oh, ow);
        if (param_grads) {
          const auto col = im2col(in, spec.kernel, spec.stride);
          auto& g = (*param_grads)[l];
          MatrixMap(g.weight.raw(), spec.out, taps).noalias() +=
              gy * ConstMatrixMap(col.data(), taps, positions).transpose();
          VectorMap(g.bias.raw(), spec.out) += gy.rowwise().sum();
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = in[i] > 0.0 ? grad[i] : 0.0;
        break;
      case LayerKind::tanh: {
        const Tensor& out = trace.activations[l + 1];
        for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = grad[i] * (1.0 - out[i] * out[i]);
        break;
      }
      case LayerKind::flatten:
        std::copy(grad.data().begin(), grad.data().end(), grad_in.data().begin());
        break;
      case LayerKind::maxpool2d: {
        // Gradient goes to the first maximal element of each window.
        const auto& is = in.shape();
        const auto& os = shapes_[l];
        const std::size_t k = spec.kernel;
        for (std::size_t c = 0; c < os[0]; ++c)
          for (std::size_t oy = 0; oy < os[1]; ++oy)
            for (std::size_t ox = 0; ox < os[2]; ++ox) {
              std::size_t best_index = (c * is[1] + oy * k) * is[2] + ox * k;
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const std::size_t idx = (c * is[1] + oy * k + ky) * is[2] + ox * k + kx;
                  if (in[idx] > in[best_index]) best_index = idx;
                }
              grad_in[best_index] += grad[(c * os[1] + oy) * os[2] + ox];
            }
        break;
      }
    }
    grad = std::move(grad_in);
  }
  return grad;
}

}  // namespace modeconn
