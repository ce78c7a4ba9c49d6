#include <cmath>

#include "modeconn/errors.hpp"
#include "modeconn/percolation.hpp"

namespace modeconn {

double mean_field_P(double q) {
  if (!(q >= 0.0)) throw InvalidArgument("mean_field_P: q must be nonnegative");
  if (q <= 1.0) return 0.0;
  // g(P) = P - (1 - e^{-qP}) is negative on (0, P*) and positive above it.
  auto g = [q](double p) { return p + std::expm1(-q * p); };
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace modeconn
