#pragma once

#include <span>
#include <vector>

namespace modeconn {

/// Area under the ROC curve from the Mann-Whitney rank statistic; tied scores
/// receive their average rank. `positive[i]` marks the positive class. Throws
/// InvalidArgument unless both classes are present.
double roc_auc(std::span<const double> scores, const std::vector<bool>& positive);

/// Fraction of scores where (score >= threshold) == positive.
double threshold_accuracy(std::span<const double> scores, const std::vector<bool>& positive,
                          double threshold = 0.5);

}  // namespace modeconn
