#include <doctest.h>

#include "modeconn/connector.hpp"
#include "modeconn/loss.hpp"
#include "support.hpp"

using namespace modeconn;
using testing::random_tensor;

namespace {

double hf_oracle(const Tensor& x) {
  const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  auto at = [&](std::size_t k, std::size_t i, std::size_t j) { return x[k * h * w + i * w + j]; };
  double s = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 1; j < w; ++j) s += (at(k, i, j) - at(k, i, j - 1)) * (at(k, i, j) - at(k, i, j - 1));
    for (std::size_t i = 1; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) s += (at(k, i, j) - at(k, i - 1, j)) * (at(k, i, j) - at(k, i - 1, j));
  }
  return s;
}

// Two-class net on R^2 whose class-1 loss is tiny everywhere except on the
// diamond |x0| + |x1| < 0.5, where it rises to about 18.
Network diamond_net() {
  Network net({2}, {LayerSpec::dense(2, 4), LayerSpec::relu(), LayerSpec::dense(4, 1), LayerSpec::relu(),
                    LayerSpec::dense(1, 2)});
  auto& p = net.params();
  p[0].weight = Tensor({4, 2}, {1, 0, -1, 0, 0, 1, 0, -1});
  p[2].weight = Tensor({1, 4}, {-1, -1, -1, -1});
  p[2].bias = Tensor({1}, {0.5});
  p[4].weight = Tensor({2, 1}, {0, -60});
  p[4].bias = Tensor({2}, {0, 12});
  return net;
}

}  // namespace

TEST_CASE("hf penalty matches a neighbor-pair oracle") {
  Rng rng(1);
  for (const Shape& s : {Shape{1, 5, 7}, Shape{3, 4, 4}, Shape{2, 1, 6}}) {
    const Tensor x = random_tensor(s, rng);
    CHECK(hf_penalty(x) == doctest::Approx(hf_oracle(x)).epsilon(1e-12));
  }
  CHECK(hf_penalty(Tensor({1, 4, 4}, 0.7)) == 0.0);
  CHECK_THROWS_AS(hf_penalty(Tensor({16})), ShapeError);
}

TEST_CASE("hf penalty gradient matches central differences") {
  Rng rng(2);
  const Tensor x = random_tensor({2, 4, 5}, rng);
  const Tensor g = hf_penalty_gradient(x);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(testing::relative_error(g[i], testing::central_difference(hf_penalty, x, i)) < 1e-6);
}

TEST_CASE("barrier point moves orthogonally and does not raise the loss") {
  const Network net = testing::tiny_cnn(3);
  Rng rng(4);
  ConnectorConfig cfg;
  cfg.iters = 200;
  for (int t = 0; t < 5; ++t) {
    const Tensor a = random_tensor({1, 8, 8}, rng, 0, 1);
    const Tensor c = random_tensor({1, 8, 8}, rng, 0, 1);
    const Tensor b = interpolate(a, c, rng.uniform(0.2, 0.8));
    const auto r = optimize_barrier_point(net, a, c, b, t % 3, cfg);
    const Tensor normal = c - a;
    CHECK(std::abs(dot(r.point - b, normal)) <= 1e-10 * norm_l2(normal) * std::max(1.0, norm_l2(r.point - b)));
    CHECK(r.loss_after <= r.loss_before);
    CHECK(r.loss_before == loss_at(net, b, t % 3));
    CHECK(r.loss_after == loss_at(net, r.point, t % 3));
    for (double v : r.point.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("a flat network leaves the barrier point in place") {
  const Network zero({1, 4, 4}, {LayerSpec::flatten(), LayerSpec::dense(16, 3)});
  const Tensor a({1, 4, 4}, 0.2), c({1, 4, 4}, 0.8), b({1, 4, 4}, 0.5);
  ConnectorConfig cfg;
  cfg.iters = 50;
  const auto r = optimize_barrier_point(zero, a, c, b, 0, cfg);
  CHECK(r.point == b);
  CHECK(r.best_iteration == 0);
}

TEST_CASE("degenerate chords and invalid settings are rejected") {
  const Network net = testing::tiny_cnn(5);
  const Tensor a({1, 8, 8}, 0.3);
  CHECK_THROWS_AS(optimize_barrier_point(net, a, a, a, 0, ConnectorConfig{}), InvalidArgument);
  ConnectorConfig bad;
  bad.delta = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  try {
    ConnectorConfig c;
    c.iters = 0;
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "iters");
  }
}

TEST_CASE("connect bypasses a barrier and keeps the endpoints") {
  const Network net = diamond_net();
  const Tensor a = Tensor::vector({-1.0, 0.1}), c = Tensor::vector({1.0, 0.1});
  ConnectorConfig cfg;
  cfg.lambda_mse = 0.01;
  cfg.clamp_range.reset();
  cfg.primary_points = 201;
  cfg.points_per_segment = 101;
  REQUIRE(loss_at(net, a, 1) < cfg.delta);
  const ConnectResult r = connect(net, a, c, 1, cfg);
  CHECK(r.connected);
  CHECK(find_barrier(r.primary).max_loss > 1.0);
  CHECK(r.depth_used >= 1);
  CHECK(r.path.waypoints.front() == a);
  CHECK(r.path.waypoints.back() == c);
  CHECK(r.path.segments() >= 2);
  CHECK(find_barrier(r.curve).max_loss <= cfg.delta);
  CHECK(r.refinements.front().level == 0);
}

TEST_CASE("connect returns a straight path when no barrier exists") {
  const Network net = diamond_net();
  const Tensor a = Tensor::vector({-1.0, 1.0}), c = Tensor::vector({1.0, 1.0});
  ConnectorConfig cfg;
  cfg.clamp_range.reset();
  const ConnectResult r = connect(net, a, c, 1, cfg);
  CHECK(r.path.segments() == 1);
  CHECK(r.refinements.empty());
  CHECK(r.depth_used == 0);
}

TEST_CASE("connect reports failures with the best path") {
  const Network net = diamond_net();
  ConnectorConfig cfg;
  cfg.clamp_range.reset();
  // Endpoints of the wrong class violate the precondition.
  CHECK_THROWS_AS(connect(net, Tensor::vector({-1.0, 0.1}), Tensor::vector({1.0, 0.1}), 0, cfg),
                  InvalidArgument);
  cfg.iters = 1;
  cfg.max_depth = 1;
  try {
    connect(net, Tensor::vector({-1.0, 0.1}), Tensor::vector({1.0, 0.1}), 1, cfg);
    FAIL("expected NotConnectedError");
  } catch (const NotConnectedError& e) {
    CHECK_FALSE(e.best().connected);
    CHECK(e.best().path.segments() == 2);
    CHECK(e.kind() == "not_connected");
  }
}
