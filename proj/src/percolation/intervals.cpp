#include <cmath>

#include "modeconn/errors.hpp"
#include "modeconn/percolation.hpp"

namespace modeconn {

std::vector<Interval> interval_labels(double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("interval_labels: delta must lie in (0, 1]");
  const double inv = 1.0 / delta;
  const double n = std::round(inv);
  if (std::abs(inv - n) > 1e-9 * n)
    throw InvalidArgument("interval_labels: 1/delta must be an integer, got " + std::to_string(inv));
  const auto halves = static_cast<std::size_t>(2.0 * n);
  std::vector<Interval> out;
  out.reserve(halves - 1);
  // Endpoints as k / (2n) so the last interval ends at exactly 1.
  for (std::size_t k = 0; k + 1 < halves; ++k)
    out.push_back({static_cast<double>(k) / static_cast<double>(halves),
                   static_cast<double>(k + 2) / static_cast<double>(halves)});
  return out;
}

}  // namespace modeconn
