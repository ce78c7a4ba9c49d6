#include "modeconn/connector.hpp"

#include <algorithm>
#include <cmath>

#include "modeconn/adam.hpp"
#include "modeconn/loss.hpp"

namespace modeconn {

void ConnectorConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (iters == 0) throw ConfigError("iters", "must be positive");
  if (!(lambda_mse >= 0.0)) throw ConfigError("lambda_mse", "must be nonnegative");
  if (!(lambda_hf >= 0.0)) throw ConfigError("lambda_hf", "must be nonnegative");
  if (!(delta > 0.0)) throw ConfigError("delta", "must be positive");
  if (max_depth == 0) throw ConfigError("max_depth", "must be positive");
  if (primary_points < 2) throw ConfigError("primary_points", "must be at least 2");
  if (points_per_segment < 2) throw ConfigError("points_per_segment", "must be at least 2");
  if (clamp_range && !(clamp_range->first < clamp_range->second))
    throw ConfigError("clamp_range", "lower bound must be below upper bound");
}

namespace {

void require_image(const Tensor& x) {
  if (x.shape().size() != 3)
    throw ShapeError("hf_penalty needs a (C,H,W) image, got " + shape_string(x.shape()));
}

/// Projects z onto {x : (x - base) . normal = 0} intersected with the box.
/// The clamped point clamp(z' - lambda * normal) moves monotonically along the
/// normal direction, so the multiplier is found by bisection.
Tensor project_feasible(const Tensor& z, const Tensor& base, const Tensor& normal, double normal_sq,
                        const std::optional<std::pair<double, double>>& box) {
  Tensor d = z - base;
  axpy(-dot(d, normal) / normal_sq, normal, d);
  Tensor x = base + d;
  if (!box) return x;
  const auto [lo, hi] = *box;
  const bool inside = std::all_of(x.data().begin(), x.data().end(),
                                  [&](double v) { return v >= lo && v <= hi; });
  if (inside) return x;

  auto clamped = [&](double lambda) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] - lambda * normal[i], lo, hi);
    return out;
  };
  auto residual = [&](double lambda) { return dot(clamped(lambda) - base, normal); };

  double step = 1.0 / std::sqrt(normal_sq);
  double left = -step, right = step;
  while (residual(left) < 0.0) left *= 2.0;
  while (residual(right) > 0.0) right *= 2.0;
  for (int it = 0; it < 200 && right - left > 0.0; ++it) {
    const double mid = 0.5 * (left + right);
    if (mid <= left || mid >= right) break;
    (residual(mid) > 0.0 ? left : right) = mid;
  }
  Tensor best = clamped(right);
  const Tensor other = clamped(left);
  if (std::abs(dot(other - base, normal)) < std::abs(dot(best - base, normal))) best = other;
  return best;
}

double regularized_objective(double ce, const Tensor& x, const Tensor& anchor,
                             const ConnectorConfig& cfg, bool image) {
  double obj = ce + cfg.lambda_mse * mean_squared_difference(x, anchor);
  if (image && cfg.lambda_hf > 0.0) obj += cfg.lambda_hf * hf_penalty(x);
  return obj;
}

}  // namespace

double hf_penalty(const Tensor& x) {
  require_image(x);
  const auto& s = x.shape();
  const std::size_t channels = s[0], height = s[1], width = s[2];
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const double v = x[(c * height + i) * width + j];
        if (j + 1 < width) {
          const double d = x[(c * height + i) * width + j + 1] - v;
          total += d * d;
        }
        if (i + 1 < height) {
          const double d = x[(c * height + i + 1) * width + j] - v;
          total += d * d;
        }
      }
  return total;
}

Tensor hf_penalty_gradient(const Tensor& x) {
  require_image(x);
  const auto& s = x.shape();
  const std::size_t channels = s[0], height = s[1], width = s[2];
  Tensor g(x.shape());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t k = (c * height + i) * width + j;
        if (j + 1 < width) {
          const double d = x[k + 1] - x[k];
          g[k + 1] += 2.0 * d;
          g[k] -= 2.0 * d;
        }
        if (i + 1 < height) {
          const double d = x[k + width] - x[k];
          g[k + width] += 2.0 * d;
          g[k] -= 2.0 * d;
        }
      }
  return g;
}

BarrierPointResult optimize_barrier_point(const Network& net, const Tensor& a, const Tensor& c,
                                          const Tensor& b, std::size_t y,
                                          const ConnectorConfig& cfg) {
  cfg.validate();
  require_same_shape(a, c, "optimize_barrier_point");
  require_same_shape(a, b, "optimize_barrier_point");
  const Tensor normal = c - a;
  const double normal_sq = dot(normal, normal);
  if (!(normal_sq > 0.0)) throw InvalidArgument("optimize_barrier_point: degenerate chord, A == C");
  if (cfg.clamp_range) {
    const auto [lo, hi] = *cfg.clamp_range;
    for (double v : b.data())
      if (v < lo || v > hi)
        throw InvalidArgument("optimize_barrier_point: B lies outside the clamp range");
  }

  const bool image = b.shape().size() == 3;
  const double mse_scale = 2.0 * cfg.lambda_mse / static_cast<double>(b.size());
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

  BarrierPointResult result;
  result.point = b;
  Tensor x = b;
  AdamState state(b.size());
  double ce_b = 0.0;

  for (std::size_t it = 0; it <= cfg.iters; ++it) {
    auto lg = loss_and_input_gradient(net, x, y);
    if (!std::isfinite(lg.loss)) throw OptimizationError("barrier optimization produced a non-finite loss");
    const double obj = regularized_objective(lg.loss, x, b, cfg, image);
    if (it == 0) {
      ce_b = lg.loss;
      result.loss_before = result.loss_after = lg.loss;
      result.objective = obj;
    } else if (obj < result.objective && lg.loss <= ce_b) {
      result.point = x;
      result.loss_after = lg.loss;
      result.objective = obj;
      result.best_iteration = it;
    }
    if (it == cfg.iters) break;

    Tensor grad = std::move(lg.grad);
    if (cfg.lambda_mse > 0.0)
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += mse_scale * (x[k] - b[k]);
    if (image && cfg.lambda_hf > 0.0) axpy(cfg.lambda_hf, hf_penalty_gradient(x), grad);
    axpy(-dot(grad, normal) / normal_sq, normal, grad);

    const Tensor step = adam_step(state, grad, adam);
    x = project_feasible(x + step, b, normal, normal_sq, cfg.clamp_range);
    if (!all_finite(x)) throw OptimizationError("barrier optimization diverged");
  }
  return result;
}

namespace {

struct Refiner {
  const Network& net;
  std::size_t y;
  const ConnectorConfig& cfg;
  std::vector<Refinement> refinements;
  std::size_t depth_used = 0;

  /// Waypoints from `start` to `end` inclusive.
  std::vector<Tensor> refine(const Tensor& start, const Tensor& end, std::size_t level,
                             std::size_t points) {
    const Path segment{{start, end}, y};
    const LossCurve curve = sample_loss_curve(net, segment, points);
    if (is_delta_connected(curve, cfg.delta) || level >= cfg.max_depth) return {start, end};

    const BarrierReport barrier = find_barrier(curve);
    const double t = static_cast<double>(barrier.argmax_index) / static_cast<double>(points - 1);
    Tensor b = interpolate(end, start, t);
    auto opt = optimize_barrier_point(net, start, end, b, y, cfg);
    depth_used = std::max(depth_used, level + 1);
    refinements.push_back({level, start, end, b, opt.point, opt.loss_before, opt.loss_after});

    auto left = refine(start, opt.point, level + 1, cfg.points_per_segment);
    auto right = refine(opt.point, end, level + 1, cfg.points_per_segment);
    left.insert(left.end(), std::make_move_iterator(right.begin() + 1),
                std::make_move_iterator(right.end()));
    return left;
  }
};

}  // namespace

ConnectResult connect(const Network& net, const Tensor& a, const Tensor& c, std::size_t y,
                      const ConnectorConfig& cfg) {
  cfg.validate();
  require_same_shape(a, c, "connect");
  const double loss_a = loss_at(net, a, y), loss_c = loss_at(net, c, y);
  if (loss_a > cfg.delta || loss_c > cfg.delta)
    throw InvalidArgument("connect: endpoint losses (" + std::to_string(loss_a) + ", " +
                          std::to_string(loss_c) + ") exceed delta " + std::to_string(cfg.delta));

  Refiner refiner{net, y, cfg, {}, 0};
  ConnectResult result;
  result.path = Path{refiner.refine(a, c, 0, cfg.primary_points), y};
  result.path.waypoints.front() = a;
  result.path.waypoints.back() = c;
  result.refinements = std::move(refiner.refinements);
  result.depth_used = refiner.depth_used;
  result.primary = sample_loss_curve(net, Path{{a, c}, y}, cfg.primary_points);
  result.curve = result.path.segments() == 1
                     ? result.primary
                     : sample_loss_curve(net, result.path, cfg.points_per_segment);
  result.connected = is_delta_connected(result.curve, cfg.delta);
  if (!result.connected) throw NotConnectedError(std::move(result));
  return result;
}

}  // namespace modeconn
