#include "modeconn/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "modeconn/errors.hpp"

namespace modeconn {

double roc_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw InvalidArgument("roc_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (positive[order[t]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InvalidArgument("roc_auc: needs both classes");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double threshold_accuracy(std::span<const double> scores, const std::vector<bool>& positive,
                          double threshold) {
  if (scores.size() != positive.size()) throw InvalidArgument("threshold_accuracy: length mismatch");
  if (scores.empty()) throw InvalidArgument("threshold_accuracy: no scores");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hits += (scores[i] >= threshold) == positive[i];
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

}  // namespace modeconn
