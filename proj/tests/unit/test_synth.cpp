#include <doctest.h>

#include "modeconn/loss.hpp"
#include "modeconn/synth.hpp"
#include "support.hpp"

using namespace modeconn;
using testing::random_tensor;

namespace {

// ReLU only, so logits are unbounded and every class is reachable.
Network relu_cnn(std::uint64_t seed) {
  Network net({1, 6, 6}, {LayerSpec::conv2d(1, 3, 3), LayerSpec::relu(), LayerSpec::flatten(),
                          LayerSpec::dense(48, 3)});
  net.initialize(seed, 2.0);
  return net;
}

}  // namespace

TEST_CASE("surrogate of a scaled one-hot is half the scale") {
  for (double c : {0.5, 1.0, 7.0, 123.0}) {
    Tensor z({5});
    z[2] = c;
    CHECK(surrogate_objective(z, 2) == doctest::Approx(c / 2).epsilon(1e-14));
  }
  CHECK(surrogate_objective(Tensor({4}), 1) == 0.0);
  CHECK(surrogate_objective(Tensor::vector({-1.0, 2.0}), 0) == 0.0);
  CHECK_THROWS_AS(surrogate_objective(Tensor({3}), 3), InvalidArgument);
}

TEST_CASE("surrogate is positively homogeneous of degree one") {
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const Tensor z = random_tensor({6}, rng, -2, 2);
    const double s = rng.uniform(0.1, 10);
    CHECK(surrogate_objective(s * z, 3) == doctest::Approx(s * surrogate_objective(z, 3)).epsilon(1e-12));
  }
}

TEST_CASE("surrogate gradient matches central differences where the cosine is positive") {
  Rng rng(2);
  int checked = 0;
  while (checked < 20) {
    Tensor z = random_tensor({5}, rng, -1, 1);
    z[1] = rng.uniform(0.5, 2);
    ++checked;
    const Tensor g = surrogate_objective_gradient(z, 1);
    auto f = [](const Tensor& v) { return surrogate_objective(v, 1); };
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK(testing::relative_error(g[i], testing::central_difference(f, z, i, 1e-6)) < 1e-6);
  }
  const Tensor dead = surrogate_objective_gradient(Tensor::vector({1.0, -1.0}), 1);
  CHECK(dead == Tensor::vector({0.0, 0.5}));
}

TEST_CASE("optimal inputs reach the threshold deterministically") {
  const Network net = relu_cnn(3);
  FvoConfig cfg;
  cfg.loss_threshold = 1e-3;
  for (std::size_t y = 0; y < 3; ++y) {
    const FvoResult a = generate_optimal_input(net, y, cfg, 10 + y);
    const FvoResult b = generate_optimal_input(net, y, cfg, 10 + y);
    CHECK(a.loss <= cfg.loss_threshold);
    CHECK(a.loss == loss_at(net, a.input, y));
    CHECK(a.input == b.input);
    CHECK(a.iterations == b.iterations);
  }
}

TEST_CASE("the surrogate objective drives a linear model to the threshold") {
  // A full-rank affine map reaches every logit direction, so the cosine can approach one.
  Network net({4}, {LayerSpec::dense(4, 3)});
  net.initialize(4, 2.0);
  FvoConfig cfg;
  cfg.loss_threshold = 1e-3;
  cfg.objective = FvoObjective::surrogate;
  const FvoResult r = generate_optimal_input(net, 1, cfg, 5);
  CHECK(r.loss <= cfg.loss_threshold);
}

TEST_CASE("a stalled optimization carries its best input") {
  const Network net = relu_cnn(5);
  FvoConfig cfg;
  cfg.max_iters = 3;
  cfg.loss_threshold = 1e-12;
  try {
    generate_optimal_input(net, 0, cfg, 1);
    FAIL("expected ThresholdNotReached");
  } catch (const ThresholdNotReached& e) {
    CHECK(e.best().loss == loss_at(net, e.best().input, 0));
    CHECK(e.best().iterations <= 3);
    CHECK(e.kind() == "threshold_not_reached");
  }
}

TEST_CASE("diverse pairs use distinct seeds and the penalty only on the second") {
  const Network net = relu_cnn(6);
  FvoConfig cfg;
  cfg.loss_threshold = 1e-3;
  cfg.hf_weight = 2.5e-7;
  const auto [first, second] = generate_diverse_pair(net, 2, cfg, 1, 2);
  FvoConfig plain = cfg;
  plain.hf_weight = 0.0;
  CHECK(first.input == generate_optimal_input(net, 2, plain, 1).input);
  CHECK(second.input == generate_optimal_input(net, 2, cfg, 2).input);
  CHECK_FALSE(first.input == second.input);
  CHECK_THROWS_AS(generate_diverse_pair(net, 2, cfg, 3, 3), InvalidArgument);
}

TEST_CASE("fvo settings are validated by field") {
  FvoConfig cfg;
  cfg.lr = -1;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "lr");
  }
  const Network net = relu_cnn(7);
  CHECK_THROWS_AS(generate_optimal_input(net, 3, FvoConfig{}, 0), InvalidArgument);
}
