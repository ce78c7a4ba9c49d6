#include "modeconn/paths.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "modeconn/errors.hpp"
#include "modeconn/loss.hpp"
#include "modeconn/parallel.hpp"

namespace modeconn {

Tensor interpolate(const Tensor& x_i, const Tensor& x_j, double alpha) {
  require_same_shape(x_i, x_j, "interpolate");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InvalidArgument("interpolate: alpha " + std::to_string(alpha) + " outside [0,1]");
  Tensor out(x_i.shape());
  const double beta = 1.0 - alpha;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = alpha * x_i[k] + beta * x_j[k];
  return out;
}

void Path::validate() const {
  if (waypoints.size() < 2) throw InvalidArgument("path needs at least two waypoints");
  for (const auto& w : waypoints) require_same_shape(waypoints.front(), w, "path waypoints");
}

LossCurve sample_loss_curve(const Network& net, const Path& path, std::size_t n_per_segment) {
  path.validate();
  if (n_per_segment < 2) throw InvalidArgument("sample_loss_curve: n_per_segment must be >= 2");
  const std::size_t m = path.segments();

  // Global sample k -> (segment, local index). Segment 0 keeps all its points;
  // later segments skip their first point, which is the previous joint.
  struct Sample {
    std::size_t segment;
    std::size_t local;
  };
  std::vector<Sample> samples;
  samples.reserve(m * (n_per_segment - 1) + 1);
  for (std::size_t s = 0; s < m; ++s)
    for (std::size_t i = (s == 0 ? 0 : 1); i < n_per_segment; ++i) samples.push_back({s, i});

  const double denom = static_cast<double>(n_per_segment - 1);
  LossCurve curve;
  curve.alphas.resize(samples.size());
  curve.segment.resize(samples.size());
  curve.losses = parallel_map<double>(samples.size(), [&](std::size_t k) {
    const auto [s, i] = samples[k];
    const double t = static_cast<double>(i) / denom;
    return loss_at(net, interpolate(path.waypoints[s + 1], path.waypoints[s], t), path.target_class);
  });
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto [s, i] = samples[k];
    curve.alphas[k] = (static_cast<double>(s) + static_cast<double>(i) / denom) / static_cast<double>(m);
    curve.segment[k] = (i == 0 && s > 0) ? s - 1 : s;
  }
  curve.alphas.back() = 1.0;
  for (std::size_t s = 0; s <= m; ++s)
    curve.boundaries.push_back(static_cast<double>(s) / static_cast<double>(m));
  return curve;
}

BarrierReport find_barrier(const LossCurve& curve) {
  if (curve.losses.empty()) throw InvalidArgument("find_barrier: empty curve");
  BarrierReport r;
  r.argmax_index = 0;
  for (std::size_t k = 1; k < curve.losses.size(); ++k)
    if (curve.losses[k] > curve.losses[r.argmax_index]) r.argmax_index = k;
  r.max_loss = curve.losses[r.argmax_index];
  r.argmax_alpha = curve.alphas.empty() ? 0.0 : curve.alphas[r.argmax_index];
  r.endpoint_losses = {curve.losses.front(), curve.losses.back()};
  r.gap = r.max_loss - std::max(r.endpoint_losses.first, r.endpoint_losses.second);
  return r;
}

bool is_delta_connected(const LossCurve& curve, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("is_delta_connected: delta must be positive");
  return std::all_of(curve.losses.begin(), curve.losses.end(), [&](double l) { return l <= delta; });
}

std::vector<double> segment_max_losses(const LossCurve& curve) {
  const std::size_t m = curve.boundaries.empty() ? 1 : curve.boundaries.size() - 1;
  std::vector<double> out(m, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < curve.size(); ++k) {
    const std::size_t s = curve.segment.empty() ? 0 : curve.segment[k];
    out[s] = std::max(out[s], curve.losses[k]);
  }
  // The leading joint of segment s>0 is stored under s-1 but lies on both.
  for (std::size_t k = 1; k < curve.size(); ++k)
    if (!curve.segment.empty() && curve.segment[k] != curve.segment[k - 1]) {
      const std::size_t s = curve.segment[k];
      out[s] = std::max(out[s], curve.losses[k - 1]);
    }
  return out;
}

void write_curve_csv(std::ostream& out, const LossCurve& curve) {
  const auto old_precision = out.precision();
  out << "alpha,loss,segment\n" << std::setprecision(17);
  for (std::size_t k = 0; k < curve.size(); ++k)
    out << curve.alphas[k] << ',' << curve.losses[k] << ',' << (curve.segment.empty() ? 0 : curve.segment[k])
        << '\n';
  out.precision(old_precision);
}

}  // namespace modeconn
