#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "modeconn/adam.hpp"
#include "modeconn/checkpoint.hpp"
#include "modeconn/errors.hpp"
#include "modeconn/loss.hpp"
#include "modeconn/train.hpp"
#include "support.hpp"

using namespace modeconn;
using testing::random_tensor;

namespace {

// Straight loops over the stored weight layouts, written independently of
// the library's GEMM path.
std::vector<double> naive_dense(const LayerParams& p, const std::vector<double>& x) {
  const std::size_t out = p.weight.shape()[0], in = p.weight.shape()[1];
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = p.bias[o];
    for (std::size_t i = 0; i < in; ++i) s += p.weight[o * in + i] * x[i];
    y[o] = s;
  }
  return y;
}

Tensor naive_conv(const LayerParams& p, const Tensor& x) {
  const auto& ws = p.weight.shape();
  const std::size_t co = ws[0], ci = ws[1], k = ws[2];
  const std::size_t h = x.shape()[1], w = x.shape()[2], oh = h - k + 1, ow = w - k + 1;
  Tensor y({co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double s = p.bias[o];
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
              s += p.weight[((o * ci + i) * k + a) * k + b] * x[(i * h + r + a) * w + c + b];
        y[(o * oh + r) * ow + c] = s;
      }
  return y;
}

long double long_softmax_ce(const Tensor& z, std::size_t y) {
  long double m = z[0];
  for (double v : z.data()) m = std::max<long double>(m, v);
  long double s = 0.0L;
  for (double v : z.data()) s += std::exp(static_cast<long double>(v) - m);
  return -(static_cast<long double>(z[y]) - m - std::log(s));
}

}  // namespace

TEST_CASE("tensor arithmetic and shape checks") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {4, 3, 2, 1});
  CHECK((a + b) == Tensor({2, 2}, {5, 5, 5, 5}));
  CHECK((a - b) == Tensor({2, 2}, {-3, -1, 1, 3}));
  CHECK((2.0 * a) == Tensor({2, 2}, {2, 4, 6, 8}));
  CHECK(dot(a, b) == doctest::Approx(20.0));
  CHECK(norm_linf(a - b) == 3.0);
  CHECK(mean_squared_difference(a, b) == doctest::Approx(5.0));
  CHECK_THROWS_AS(a + Tensor({4}), ShapeError);
  CHECK_THROWS_AS(Tensor({3}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(a.reshaped({3}), ShapeError);
}

TEST_CASE("network construction rejects mismatched layers") {
  CHECK_THROWS_AS(Network({4}, {LayerSpec::dense(5, 2)}), ShapeError);
  CHECK_THROWS_AS(Network({1, 4, 4}, {LayerSpec::conv2d(1, 2, 3)}), ShapeError);
  CHECK_THROWS_AS(Network({1, 2, 2}, {LayerSpec::conv2d(1, 1, 3), LayerSpec::flatten()}), ShapeError);
  const Network net = Network::reference_cnn({1, 28, 28}, 10);
  CHECK(net.layer_shapes().back() == Shape{10});
  CHECK(net.layers().size() == 10);
}

TEST_CASE("dense forward matches a naive matmul oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Network net = testing::tiny_mlp(seed, 7, 9, 4);
    Rng rng(100 + seed);
    const Tensor x = random_tensor({7}, rng);
    std::vector<double> h = naive_dense(net.params()[0], x.values());
    for (auto& v : h) v = std::max(0.0, v);
    const std::vector<double> expected = naive_dense(net.params()[2], h);
    const Tensor got = net.forward(x);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv and pool forward match direct loops") {
  const Network net = testing::tiny_cnn(3);
  Rng rng(4);
  const Tensor x = random_tensor({1, 8, 8}, rng);
  const auto trace = net.forward_trace(x);
  const Tensor conv = naive_conv(net.params()[0], x);
  for (std::size_t i = 0; i < conv.size(); ++i) CHECK(trace.activations[1][i] == doctest::Approx(conv[i]).epsilon(1e-12));

  const Tensor& relu = trace.activations[2];
  const Tensor& pooled = trace.activations[3];
  REQUIRE(pooled.shape() == Shape{2, 3, 3});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t s = 0; s < 3; ++s) {
        double m = -1e300;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) m = std::max(m, relu[(c * 6 + 2 * r + a) * 6 + 2 * s + b]);
        CHECK(pooled[(c * 3 + r) * 3 + s] == m);
      }
}

TEST_CASE("cross-entropy agrees with an extended-precision softmax") {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Tensor z = random_tensor({6}, rng, -20.0, 20.0);
    const std::size_t y = rng.below(6);
    CHECK(cross_entropy(z, y) == doctest::Approx(static_cast<double>(long_softmax_ce(z, y))).epsilon(1e-12));
  }
  const Tensor big = Tensor::vector({1000.0, -1000.0, 0.0});
  CHECK(std::isfinite(cross_entropy(big, 1)));
  CHECK(cross_entropy(big, 0) == 0.0);
  CHECK_THROWS(cross_entropy(big, 3));
  const Tensor g = cross_entropy_logit_grad(Tensor::vector({0.0, 0.0}), 0);
  CHECK(g[0] == doctest::Approx(-0.5));
  CHECK(g[1] == doctest::Approx(0.5));
}

TEST_CASE("input gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Network net = seed % 2 ? testing::tiny_cnn(seed) : testing::tiny_mlp(seed);
    Rng rng(50 + seed);
    const Tensor x = random_tensor(net.input_shape(), rng);
    const std::size_t y = rng.below(net.num_classes());
    const Tensor g = input_gradient(net, x, y);
    auto f = [&](const Tensor& v) { return loss_at(net, v, y); };
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(testing::relative_error(g[i], testing::central_difference(f, x, i)) < 1e-4);
  }
}

TEST_CASE("parameter gradients match central differences") {
  const Network net = testing::tiny_cnn(11);
  Rng rng(12);
  LabeledDataset data;
  data.num_classes = 3;
  for (int i = 0; i < 4; ++i) {
    data.inputs.push_back(random_tensor({1, 8, 8}, rng));
    data.labels.push_back(rng.below(3));
  }
  const std::vector<std::size_t> batch{0, 1, 2, 3};
  const auto bg = param_gradient(net, data, batch);
  const auto flat_grad = flatten(bg.grads);
  const auto flat = flatten(net.params());
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = rng.below(flat.size());
    auto loss_with = [&](double v) {
      Network copy = net;
      auto p = flat;
      p[k] = v;
      unflatten(p, copy.params());
      return param_gradient(copy, data, batch).mean_loss;
    };
    const double fd = (loss_with(flat[k] + 1e-5) - loss_with(flat[k] - 1e-5)) / 2e-5;
    CHECK(testing::relative_error(flat_grad[k], fd) < 1e-4);
  }
}

TEST_CASE("an inserted identity layer leaves logits unchanged") {
  const Network net = testing::tiny_mlp(21, 6, 5, 4);
  Network wider({6}, {LayerSpec::dense(6, 5), LayerSpec::relu(), LayerSpec::dense(5, 5), LayerSpec::dense(5, 4)});
  wider.params()[0] = net.params()[0];
  wider.params()[3] = net.params()[2];
  Tensor eye({5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye[i * 5 + i] = 1.0;
  wider.params()[2] = {eye, Tensor({5})};
  Rng rng(22);
  for (int t = 0; t < 10; ++t) {
    const Tensor x = random_tensor({6}, rng);
    CHECK(distance_linf(net.forward(x), wider.forward(x)) < 1e-12);
  }
}

TEST_CASE("Adam follows the published update rule") {
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  AdamState state(1);
  // f(w) = (w - 3)^2 starting at w = 0: g1 = -6.
  double w = 0.0;
  std::vector<double> step(1);
  adam_step(state, std::vector<double>{2.0 * (w - 3.0)}, cfg, step);
  // m_hat = g, v_hat = g^2 after bias correction, so the first step is lr * sign.
  CHECK(step[0] == doctest::Approx(0.1 * 6.0 / (6.0 + 1e-8)).epsilon(1e-14));
  w += step[0];
  const double g2 = 2.0 * (w - 3.0);
  const double m = 0.9 * (0.1 * -6.0) + 0.1 * g2;
  const double v = 0.999 * (0.001 * 36.0) + 0.001 * g2 * g2;
  const double expected = -0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  adam_step(state, std::vector<double>{g2}, cfg, step);
  CHECK(step[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(state.t == 2);
}

TEST_CASE("training with zero learning rate keeps parameters") {
  Network net = testing::tiny_cnn(31);
  const ParamSet before = net.params();
  Rng rng(32);
  LabeledDataset data;
  data.num_classes = 3;
  for (int i = 0; i < 10; ++i) {
    data.inputs.push_back(random_tensor({1, 8, 8}, rng));
    data.labels.push_back(rng.below(3));
  }
  TrainConfig tc;
  tc.adam.lr = 0.0;
  tc.batch_size = 4;
  tc.epochs = 2;
  const auto log = train(net, data, tc);
  CHECK(log.size() == 6);
  CHECK(net.params() == before);
}

TEST_CASE("training lowers the loss on a separable toy set") {
  Network net = testing::tiny_mlp(41, 2, 8, 2);
  LabeledDataset data;
  data.num_classes = 2;
  Rng rng(42);
  for (int i = 0; i < 64; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    data.inputs.push_back(Tensor::vector({a, b}));
    data.labels.push_back(a + b > 0 ? 1 : 0);
  }
  TrainConfig tc;
  tc.adam.lr = 0.05;
  tc.epochs = 30;
  tc.batch_size = 16;
  const auto log = train(net, data, tc);
  CHECK(log.back().loss < log.front().loss);
  CHECK(accuracy(net, data) > 0.9);
}

TEST_CASE("checkpoints round-trip through binary32") {
  const Network net = testing::tiny_cnn(51);
  std::stringstream buf;
  save_network(net, buf);
  const Network back = load_network(buf);
  CHECK(back.layers() == net.layers());
  CHECK(back.input_shape() == net.input_shape());
  for (std::size_t l = 0; l < net.params().size(); ++l) {
    CHECK(back.params()[l].weight == round_to_float(net.params()[l].weight));
    CHECK(back.params()[l].bias == round_to_float(net.params()[l].bias));
  }
  std::string bytes = buf.str();
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(load_network(bad), FormatError);
  std::stringstream cut(buf.str().substr(0, buf.str().size() - 3));
  CHECK_THROWS_AS(load_network(cut), FormatError);
}

TEST_CASE("initialization is seeded and scaled by fan-in") {
  Network a = Network::reference_mlp({1, 4, 4}, 3, 8);
  Network b = a;
  a.initialize(5);
  b.initialize(5);
  CHECK(a.params() == b.params());
  b.initialize(6);
  CHECK_FALSE(a.params() == b.params());
  const double bound = 1.0 / std::sqrt(16.0);
  for (double v : a.params()[1].weight.data()) CHECK(std::abs(v) <= bound);
  a.initialize(5, 2.0);
  for (double v : a.params()[1].weight.data()) CHECK(std::abs(v) <= 2.0 * bound);
  CHECK_THROWS_AS(a.initialize(5, 0.0), InvalidArgument);
}
