#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "modeconn/detector.hpp"
#include "modeconn/errors.hpp"
#include "modeconn/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace modeconn;
using testing::random_tensor;

namespace {

LabeledDataset noise_images(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset d;
  d.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    d.inputs.push_back(random_tensor({1, 8, 8}, rng, 0, 1));
    d.labels.push_back(i % classes);
  }
  return d;
}

}  // namespace

TEST_CASE("AUC agrees with the pairwise oracle, ties included") {
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(6)) / 5.0;  // coarse grid forces ties
      pos[i] = rng.uniform() < 0.4;
    }
    pos[0] = true;
    pos[1] = false;
    CHECK(std::abs(roc_auc(s, pos) - testing::auc_oracle(s, pos)) < 1e-9);
  }
  CHECK(roc_auc(std::vector<double>{0.1, 0.9}, {false, true}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5}, {false, true}) == 0.5);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, {true, true}), InvalidArgument);
}

TEST_CASE("AUC is invariant under increasing transforms") {
  Rng rng(2);
  std::vector<double> s(200);
  std::vector<bool> pos(200);
  for (std::size_t i = 0; i < s.size(); ++i) {
    pos[i] = i % 3 == 0;
    s[i] = rng.uniform() + (pos[i] ? 0.3 : 0.0);
  }
  std::vector<double> t(s.size());
  std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3 * v) - 7; });
  CHECK(std::abs(roc_auc(s, pos) - roc_auc(t, pos)) < 1e-12);
}

TEST_CASE("random scores give AUC near one half") {
  Rng rng(3);
  std::vector<double> s(4000);
  std::vector<bool> pos(4000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    pos[i] = rng.uniform() < 0.5;
  }
  CHECK(std::abs(roc_auc(s, pos) - 0.5) < 0.03);
  CHECK(threshold_accuracy(std::vector<double>{0.2, 0.5, 0.9}, {false, true, false}) == doctest::Approx(2.0 / 3));
}

TEST_CASE("standardizer centers and scales each column") {
  Rng rng(4);
  std::vector<std::vector<double>> rows(50);
  for (auto& r : rows) r = {rng.uniform(-3, 9), 4.0, rng.normal(2, 5)};
  const Standardizer st = Standardizer::fit(rows);
  for (std::size_t j : {0u, 2u}) {
    double mean = 0.0, sq = 0.0;
    for (const auto& r : rows) mean += st.apply(r)[j];
    mean /= 50;
    for (const auto& r : rows) sq += std::pow(st.apply(r)[j] - mean, 2);
    CHECK(std::abs(mean) < 1e-12);
    // Either the population or the sample convention puts the variance near one.
    CHECK(std::abs(std::sqrt(sq / 50) - 1.0) < 0.03);
  }
  for (const auto& r : rows) CHECK(st.apply(r)[1] == 0.0);
  CHECK_THROWS_AS(st.apply({1.0}), ShapeError);
  CHECK_THROWS_AS(Standardizer::fit({}), InvalidArgument);
}

TEST_CASE("templates are the lowest-loss input of each class") {
  const Network net = testing::tiny_cnn(5);
  const LabeledDataset data = noise_images(30, 3, 6);
  const TemplateSet t = select_templates(net, data);
  REQUIRE(t.inputs.size() == 3);
  for (std::size_t y = 0; y < 3; ++y) {
    double best = 1e300;
    for (std::size_t i : data.indices_of(y)) best = std::min(best, loss_at(net, data.inputs[i], y));
    CHECK(t.losses[y] == best);
    CHECK(loss_at(net, t.inputs[y], y) == best);
  }
  LabeledDataset missing = noise_images(4, 3, 7);
  missing.labels = {0, 0, 1, 1};
  CHECK_THROWS_AS(select_templates(net, missing), InvalidArgument);
}

TEST_CASE("features are a curve to the predicted template plus sorted logits") {
  const Network net = testing::tiny_cnn(8);
  const LabeledDataset data = noise_images(30, 3, 9);
  const TemplateSet t = select_templates(net, data);
  const Tensor x = data.inputs[4];
  const FeatureVector f = featurize(net, x, t, 20);
  CHECK(f.curve.size() == 20);
  CHECK(f.flat().size() == 23);
  CHECK(f.flat(true).size() == 20);
  CHECK(std::is_sorted(f.sorted_logits.begin(), f.sorted_logits.end(), std::greater<>()));
  CHECK(f.predicted_class == argmax(net.forward(x)));
  CHECK(f.curve.front() == loss_at(net, x, f.predicted_class));
  CHECK(f.curve.back() == loss_at(net, t.inputs[f.predicted_class], f.predicted_class));
}

TEST_CASE("separable features are classified perfectly with k = 1") {
  Rng rng(10);
  std::vector<std::vector<double>> rows;
  std::vector<bool> labels;
  for (int i = 0; i < 200; ++i) {
    const bool adv = i % 2 == 1;
    rows.push_back({rng.uniform(0, 1) + (adv ? 5.0 : 0.0), rng.uniform(0, 1)});
    labels.push_back(adv);
  }
  DetectorConfig cfg;
  cfg.k_grid = {1};
  const DetectorModel m = fit_features(rows, labels, cfg);
  CHECK(m.k == 1);
  CHECK(m.validation_accuracy == 1.0);
  CHECK(predict_features(m, {5.5, 0.5}).adversarial);
  CHECK_FALSE(predict_features(m, {0.5, 0.5}).adversarial);
}

TEST_CASE("identical features carry no signal") {
  Rng rng(11);
  std::vector<std::vector<double>> rows(400, std::vector<double>{1.0, 2.0, 3.0});
  std::vector<bool> labels(400);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2 == 0;
  rng.shuffle(labels);
  const DetectorModel m = fit_features(rows, labels, DetectorConfig{});
  CHECK(std::abs(m.validation_accuracy - 0.5) < 0.1);
  CHECK_THROWS_AS(fit_features(rows, std::vector<bool>(400, false), DetectorConfig{}), InvalidArgument);
  DetectorConfig even;
  even.k_grid = {2};
  CHECK_THROWS_AS(even.validate(), ConfigError);
}

TEST_CASE("attack samples keep naturals first and tag adversarials") {
  const Network net = testing::tiny_cnn(12);
  LabeledDataset data = noise_images(12, 3, 13);
  for (std::size_t i = 0; i < data.size(); ++i) data.labels[i] = argmax(net.forward(data.inputs[i]));
  AttackConfig ac;
  ac.epsilon = 0.3;
  const auto samples = attack_samples(net, data, {AttackKind::fgsm, AttackKind::deepfool}, ac, 1);
  std::size_t naturals = 0;
  while (naturals < samples.size() && !samples[naturals].adversarial) ++naturals;
  CHECK(naturals == 12);
  for (std::size_t i = naturals; i < samples.size(); ++i) {
    CHECK(samples[i].adversarial);
    CHECK((samples[i].attack == "fgsm" || samples[i].attack == "deepfool"));
  }
  CHECK(samples.size() > naturals);
  ac.kind = AttackKind::targeted_opt;
  CHECK_THROWS_AS(attack_samples(net, data, {AttackKind::targeted_opt}, ac, 1), ConfigError);
}

TEST_CASE("evaluate reports each attack and the pooled set") {
  std::vector<DetectorSample> test(6);
  test[2].adversarial = test[3].adversarial = test[4].adversarial = test[5].adversarial = true;
  test[2].attack = test[3].attack = "fgsm";
  test[4].attack = test[5].attack = "cw";
  const auto m = evaluate_scores({0.0, 0.2, 1.0, 0.1, 0.8, 0.9}, test);
  REQUIRE(m.size() == 3);
  CHECK(m[0].attack == "cw");
  CHECK(m[0].auc == 1.0);
  CHECK(m[1].attack == "fgsm");
  CHECK(m[1].auc == doctest::Approx(0.75));
  CHECK(m[2].attack == "pooled");
  CHECK(m[2].n == 6);
}

TEST_CASE("a saved detector predicts like the original") {
  const Network net = testing::tiny_cnn(14);
  const LabeledDataset data = noise_images(30, 3, 15);
  const TemplateSet t = select_templates(net, data);
  std::vector<DetectorSample> samples;
  for (std::size_t i = 0; i < data.size(); ++i) samples.push_back({data.inputs[i], i % 2 == 0, i % 2 ? "natural" : "fgsm"});
  DetectorConfig cfg;
  cfg.n_curve = 10;
  const DetectorModel m = fit(net, t, samples, cfg);
  const auto dir = std::filesystem::temp_directory_path() / "modeconn_detector_test";
  std::filesystem::create_directories(dir);
  save_detector(m, dir / "det.json");
  const DetectorModel back = load_detector(dir / "det.json");
  CHECK(back.k == m.k);
  CHECK(back.n_curve == 10);
  CHECK(back.labels == m.labels);
  const LabeledDataset probe = noise_images(10, 3, 16);
  for (const auto& x : probe.inputs) CHECK(predict(back, net, x).score == predict(m, net, x).score);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_detector(dir / "missing.json"), IoError);
}
