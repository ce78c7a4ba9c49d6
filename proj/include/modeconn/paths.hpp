#pragma once

#include <cstddef>
#include <iosfwd>
#include <utility>
#include <vector>

#include "modeconn/network.hpp"
#include "modeconn/tensor.hpp"

namespace modeconn {

/// alpha * x_i + (1 - alpha) * x_j; alpha = 1 gives x_i, alpha = 0 gives x_j.
Tensor interpolate(const Tensor& x_i, const Tensor& x_j, double alpha);

/// Piecewise-linear path through `waypoints` for class `target_class`.
struct Path {
  std::vector<Tensor> waypoints;
  std::size_t target_class = 0;

  std::size_t segments() const noexcept { return waypoints.empty() ? 0 : waypoints.size() - 1; }
  /// Throws unless there are >= 2 waypoints of one shape.
  void validate() const;
};

/// Losses sampled along a path. Segment s of an m-segment path occupies
/// alpha in [s/m, (s+1)/m]; joints appear once and belong to the earlier segment.
struct LossCurve {
  std::vector<double> alphas;
  std::vector<double> losses;
  std::vector<std::size_t> segment;
  /// Alpha of every waypoint, starting at 0 and ending at 1.
  std::vector<double> boundaries;

  std::size_t size() const noexcept { return losses.size(); }
};

struct BarrierReport {
  double max_loss = 0.0;
  double argmax_alpha = 0.0;
  std::size_t argmax_index = 0;
  /// max_loss minus the higher endpoint loss.
  double gap = 0.0;
  std::pair<double, double> endpoint_losses{0.0, 0.0};
};

/// Evaluates `n_per_segment` uniformly spaced points (endpoints included) on
/// every segment of `path`.
LossCurve sample_loss_curve(const Network& net, const Path& path, std::size_t n_per_segment);

/// Largest sampled loss; ties resolve to the smallest alpha.
BarrierReport find_barrier(const LossCurve& curve);

/// True iff every sampled loss is <= delta.
bool is_delta_connected(const LossCurve& curve, double delta);

/// Largest loss per segment.
std::vector<double> segment_max_losses(const LossCurve& curve);

/// CSV with header `alpha,loss,segment`, reals at 17 significant digits.
void write_curve_csv(std::ostream& out, const LossCurve& curve);

}  // namespace modeconn
