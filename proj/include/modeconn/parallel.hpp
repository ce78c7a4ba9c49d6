#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace modeconn {

/// Worker count: hardware concurrency, capped by MODECONN_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on the worker pool. Each index is an
/// independent task; callers write results into slot i so assembly order never
/// depends on scheduling. The first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

template <class T, class F>
std::vector<T> parallel_map(std::size_t n, F&& fn) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace modeconn
