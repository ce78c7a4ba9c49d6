#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "modeconn/errors.hpp"
#include "modeconn/network.hpp"
#include "modeconn/paths.hpp"
#include "modeconn/tensor.hpp"

namespace modeconn {

struct ConnectorConfig {
  double lr = 0.005;
  std::size_t iters = 1024;
  double lambda_mse = 0.1;
  double lambda_hf = 1e-7;
  double delta = 0.001;
  std::size_t max_depth = 4;
  /// Elementwise box for barrier points; nullopt disables clamping.
  std::optional<std::pair<double, double>> clamp_range = std::make_pair(0.0, 1.0);
  /// Grid of the initial two-waypoint curve.
  std::size_t primary_points = 1000;
  /// Grid of every segment once a path has been refined.
  std::size_t points_per_segment = 500;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Sum over channels of squared differences between horizontally and
/// vertically adjacent pixels of a (C, H, W) tensor.
double hf_penalty(const Tensor& x);
Tensor hf_penalty_gradient(const Tensor& x);

struct BarrierPointResult {
  Tensor point;
  double loss_before = 0.0;  // cross-entropy at B
  double loss_after = 0.0;   // cross-entropy at the returned point
  double objective = 0.0;    // regularized objective at the returned point
  std::size_t best_iteration = 0;
};

/// Moves B to lower loss inside the hyperplane through B orthogonal to C - A.
/// Adam runs on cross-entropy + lambda_mse * mean((B' - B)^2) +
/// lambda_hf * hf_penalty(B'). Each gradient is projected onto the
/// hyperplane before the moment update; after each step the iterate is
/// projected back onto {hyperplane} intersected with the clamp box. The iterate
/// with the lowest objective whose cross-entropy does not exceed that of B is
/// returned.
BarrierPointResult optimize_barrier_point(const Network& net, const Tensor& a, const Tensor& c,
                                          const Tensor& b, std::size_t y, const ConnectorConfig& cfg);

/// One barrier-point optimization performed while refining a path.
struct Refinement {
  std::size_t level = 0;  // 0 for the primary barrier
  Tensor segment_start;
  Tensor segment_end;
  Tensor barrier;
  Tensor optimized;
  double loss_before = 0.0;
  double loss_after = 0.0;
};

struct ConnectResult {
  Path path;
  LossCurve curve;        // sampled on the final path
  LossCurve primary;      // sampled on the straight segment A -> C
  std::vector<Refinement> refinements;
  std::size_t depth_used = 0;
  bool connected = false;
};

class NotConnectedError : public Error {
 public:
  explicit NotConnectedError(ConnectResult best)
      : Error("not_connected", "path is not delta-connected within the depth limit"),
        best_(std::move(best)) {}
  const ConnectResult& best() const noexcept { return best_; }

 private:
  ConnectResult best_;
};

/// Recursively bypasses barriers between the modes A and C: if a segment's
/// sampled curve exceeds delta its highest point is optimized and both halves
/// are refined again, down to `max_depth` levels. Segments that already pass
/// are kept. Throws NotConnectedError (with the best path) when the depth is
/// exhausted and InvalidArgument when an endpoint's loss exceeds delta.
ConnectResult connect(const Network& net, const Tensor& a, const Tensor& c, std::size_t y,
                      const ConnectorConfig& cfg);

}  // namespace modeconn
