#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "modeconn/network.hpp"
#include "modeconn/rng.hpp"
#include "modeconn/tensor.hpp"

namespace testing {

using namespace modeconn;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// conv 2x3x3, relu, pool2, conv 3x2x2 stride 1, tanh, flatten, dense 3.
inline Network tiny_cnn(std::uint64_t seed) {
  Network net({1, 8, 8}, {LayerSpec::conv2d(1, 2, 3), LayerSpec::relu(), LayerSpec::maxpool2d(),
                          LayerSpec::conv2d(2, 3, 2), LayerSpec::tanh(), LayerSpec::flatten(),
                          LayerSpec::dense(12, 3)});
  net.initialize(seed, 2.0);
  return net;
}

inline Network tiny_mlp(std::uint64_t seed, std::size_t in = 6, std::size_t hidden = 5, std::size_t out = 4) {
  Network net({in}, {LayerSpec::dense(in, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, out)});
  net.initialize(seed, 2.0);
  return net;
}

/// Central difference of f at coordinate i of x.
inline double central_difference(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i,
                                 double h = 1e-5) {
  const double orig = x[i];
  x[i] = orig + h;
  const double up = f(x);
  x[i] = orig - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero derivatives from
/// blowing up the ratio.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testing
