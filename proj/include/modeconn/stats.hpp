#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace modeconn {

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Quantiles interpolate linearly between order statistics.
Summary summarize(std::vector<double> values);
double quantile_sorted(const std::vector<double>& sorted, double q);
nlohmann::json to_json(const Summary& s);

struct RankSumResult {
  double u = 0.0;        // Mann-Whitney U of the first sample
  double z = 0.0;        // tie-corrected normal approximation
  double p_greater = 0.0;  // one-sided: first sample tends to be larger
  double p_two_sided = 0.0;
};

/// Wilcoxon-Mann-Whitney rank-sum test with average ranks for ties and the
/// tie-corrected normal approximation.
RankSumResult rank_sum_test(const std::vector<double>& first, const std::vector<double>& second);

}  // namespace modeconn
