#include "modeconn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "modeconn/errors.hpp"

namespace modeconn {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile: empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("summarize: empty sample");
  std::sort(values.begin(), values.end());
  Summary s;
  s.n = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  return s;
}

nlohmann::json to_json(const Summary& s) {
  return {{"n", s.n},       {"mean", s.mean}, {"std", s.stddev}, {"min", s.min},
          {"q1", s.q1},     {"median", s.median}, {"q3", s.q3}, {"max", s.max}};
}

RankSumResult rank_sum_test(const std::vector<double>& first, const std::vector<double>& second) {
  if (first.empty() || second.empty()) throw InvalidArgument("rank_sum_test: empty sample");
  struct Item {
    double value;
    bool first;
  };
  std::vector<Item> all;
  for (double v : first) all.push_back({v, true});
  for (double v : second) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.value < b.value; });

  const double n1 = static_cast<double>(first.size()), n2 = static_cast<double>(second.size());
  const double n = n1 + n2;
  double rank_sum = 0.0, tie_term = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double t = static_cast<double>(j - i);
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (all[k].first) rank_sum += avg;
    tie_term += t * t * t - t;
    i = j;
  }
  RankSumResult r;
  r.u = rank_sum - n1 * (n1 + 1.0) / 2.0;
  const double mean_u = n1 * n2 / 2.0;
  const double var_u = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var_u <= 0.0) {
    r.p_greater = r.p_two_sided = 1.0;
    return r;
  }
  r.z = (r.u - mean_u) / std::sqrt(var_u);
  r.p_greater = 0.5 * std::erfc(r.z / std::sqrt(2.0));
  r.p_two_sided = std::min(1.0, std::erfc(std::abs(r.z) / std::sqrt(2.0)));
  return r;
}

}  // namespace modeconn
