#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "modeconn/attacks.hpp"
#include "modeconn/loss.hpp"
#include "modeconn/network.hpp"
#include "modeconn/tensor.hpp"

namespace modeconn {

/// Lowest-loss training input of every class under its own label.
struct TemplateSet {
  std::vector<Tensor> inputs;
  std::vector<double> losses;
};

TemplateSet select_templates(const Network& net, const LabeledDataset& train);

struct FeatureVector {
  std::vector<double> curve;          // loss from x (alpha 0) to the template (alpha 1)
  std::vector<double> sorted_logits;  // descending
  std::size_t predicted_class = 0;

  /// curve followed by sorted_logits, or the curve alone.
  std::vector<double> flat(bool ablate_logits = false) const;
};

/// Loss curve toward the template of the predicted class, evaluated against
/// the predicted class, plus the logits in descending order.
FeatureVector featurize(const Network& net, const Tensor& x, const TemplateSet& templates,
                        std::size_t n_curve = 50);

inline constexpr const char* kNaturalTag = "natural";

/// One detector input; `attack` is "natural" for clean inputs.
struct DetectorSample {
  Tensor input;
  bool adversarial = false;
  std::string attack = kNaturalTag;
};

/// Every correctly classified input of `data` becomes a natural sample, and
/// input i is also attacked with kinds[i % kinds.size()]; successful attacks
/// become adversarial samples. Naturals come first, then adversarials, both
/// in dataset order. Attack i draws its seed from `seed` split by i.
std::vector<DetectorSample> attack_samples(const Network& net, const LabeledDataset& data,
                                           const std::vector<AttackKind>& kinds,
                                           const AttackConfig& attack, std::uint64_t seed);

struct DetectorConfig {
  std::size_t n_curve = 50;
  bool ablate_logits = false;
  std::vector<std::size_t> k_grid = {1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31};
  double validation_fraction = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-dimension affine map to zero mean and unit variance; dimensions
/// without variance map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> apply(const std::vector<double>& row) const;
};

struct DetectorModel {
  TemplateSet templates;
  std::size_t n_curve = 50;
  bool ablate_logits = false;
  Standardizer standardizer;
  std::vector<std::vector<double>> features;  // standardized training rows
  std::vector<bool> labels;                   // true = adversarial
  std::size_t k = 1;
  double validation_accuracy = 0.0;

  bool fitted() const noexcept { return !features.empty(); }
};

/// Fits on precomputed raw feature rows: standardization and the neighbor
/// store use the training split only; k maximizes validation accuracy
/// (ties pick the smaller k).
DetectorModel fit_features(const std::vector<std::vector<double>>& rows,
                           const std::vector<bool>& adversarial, const DetectorConfig& cfg);

/// Featurizes every sample and calls fit_features. Validation accuracy pools
/// all attack kinds present.
DetectorModel fit(const Network& net, const TemplateSet& templates,
                  const std::vector<DetectorSample>& samples, const DetectorConfig& cfg);

struct Prediction {
  double score = 0.0;  // fraction of adversarial neighbors
  bool adversarial = false;
};

/// Scores a raw (unstandardized) feature row. Distance ties resolve to the
/// earlier training row.
Prediction predict_features(const DetectorModel& model, const std::vector<double>& raw);
Prediction predict(const DetectorModel& model, const Network& net, const Tensor& x);

struct AttackMetrics {
  std::string attack;
  double accuracy = 0.0;
  double auc = 0.0;
  std::size_t n = 0;
};

/// One row per attack kind (its adversarials against all naturals) followed by
/// a "pooled" row over the whole test set. Rows are sorted by attack name.
std::vector<AttackMetrics> evaluate(const DetectorModel& model, const Network& net,
                                    const std::vector<DetectorSample>& test);
std::vector<AttackMetrics> evaluate_scores(const std::vector<double>& scores,
                                           const std::vector<DetectorSample>& test);

/// Writes `path` (JSON: settings, standardization, k) and a sibling blob
/// `<path>.blob` with the templates and the feature matrix.
void save_detector(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

}  // namespace modeconn
