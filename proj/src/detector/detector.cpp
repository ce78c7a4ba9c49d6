#include "modeconn/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>

#include "modeconn/checkpoint.hpp"
#include "modeconn/errors.hpp"
#include "modeconn/metrics.hpp"
#include "modeconn/parallel.hpp"
#include "modeconn/paths.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

TemplateSet select_templates(const Network& net, const LabeledDataset& train) {
  train.validate();
  TemplateSet set;
  for (std::size_t y = 0; y < train.num_classes; ++y) {
    const auto idx = train.indices_of(y);
    if (idx.empty()) throw InvalidArgument("select_templates: class " + std::to_string(y) + " has no examples");
    const auto losses = parallel_map<double>(
        idx.size(), [&](std::size_t i) { return loss_at(net, train.inputs[idx[i]], y); });
    const auto best = std::min_element(losses.begin(), losses.end()) - losses.begin();
    set.inputs.push_back(train.inputs[idx[best]]);
    set.losses.push_back(losses[best]);
  }
  return set;
}

std::vector<double> FeatureVector::flat(bool ablate_logits) const {
  std::vector<double> out = curve;
  if (!ablate_logits) out.insert(out.end(), sorted_logits.begin(), sorted_logits.end());
  return out;
}

FeatureVector featurize(const Network& net, const Tensor& x, const TemplateSet& templates,
                        std::size_t n_curve) {
  if (n_curve < 2) throw InvalidArgument("featurize: n_curve must be at least 2");
  if (templates.inputs.size() != net.num_classes())
    throw InvalidArgument("featurize: template count does not match the class count");
  const Tensor logits = net.forward(x);
  FeatureVector f;
  f.predicted_class = argmax(logits);
  const Path path{{x, templates.inputs[f.predicted_class]}, f.predicted_class};
  f.curve = sample_loss_curve(net, path, n_curve).losses;
  f.sorted_logits = logits.values();
  std::sort(f.sorted_logits.begin(), f.sorted_logits.end(), std::greater<>());
  return f;
}

std::vector<DetectorSample> attack_samples(const Network& net, const LabeledDataset& data,
                                           const std::vector<AttackKind>& kinds,
                                           const AttackConfig& attack, std::uint64_t seed) {
  data.validate();
  if (kinds.empty()) throw InvalidArgument("attack_samples: no attack kinds");
  attack.validate();
  const Rng root(seed);
  struct Outcome {
    bool natural = false;
    std::optional<DetectorSample> adversarial;
  };
  const auto outcomes = parallel_map<Outcome>(data.size(), [&](std::size_t i) {
    Outcome o;
    const Tensor& x = data.inputs[i];
    if (argmax(net.forward(x)) != data.labels[i]) return o;
    o.natural = true;
    AttackConfig cfg = attack;
    cfg.kind = kinds[i % kinds.size()];
    if (cfg.kind == AttackKind::targeted_opt) throw ConfigError("kind", "targeted_opt needs a target class");
    const auto adv = run_attack(net, x, data.labels[i], cfg, root.split(i).next_u64());
    if (adv.success) o.adversarial = DetectorSample{adv.adversarial, true, std::string(to_string(cfg.kind))};
    return o;
  });
  std::vector<DetectorSample> samples;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (outcomes[i].natural) samples.push_back({data.inputs[i], false, kNaturalTag});
  for (const auto& o : outcomes)
    if (o.adversarial) samples.push_back(*o.adversarial);
  return samples;
}

void DetectorConfig::validate() const {
  if (n_curve < 2) throw ConfigError("n_curve", "must be at least 2");
  if (k_grid.empty()) throw ConfigError("k_grid", "must not be empty");
  for (auto k : k_grid)
    if (k == 0 || k % 2 == 0) throw ConfigError("k_grid", "values must be positive and odd");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction", "must lie in [0, 1)");
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw InvalidArgument("Standardizer::fit: no rows");
  const std::size_t dim = rows.front().size();
  Standardizer s{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    if (r.size() != dim) throw ShapeError("Standardizer::fit: ragged rows");
    for (std::size_t d = 0; d < dim; ++d) s.mean[d] += r[d];
  }
  for (auto& m : s.mean) m /= n;
  std::vector<double> var(dim, 0.0);
  for (const auto& r : rows)
    for (std::size_t d = 0; d < dim; ++d) var[d] += (r[d] - s.mean[d]) * (r[d] - s.mean[d]);
  for (std::size_t d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / n);
    s.scale[d] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[d])) ? 1.0 / sd : 0.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
  if (row.size() != mean.size())
    throw ShapeError("Standardizer: expected " + std::to_string(mean.size()) + " features, got " +
                     std::to_string(row.size()));
  std::vector<double> out(row.size());
  for (std::size_t d = 0; d < row.size(); ++d) out[d] = (row[d] - mean[d]) * scale[d];
  return out;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return s;
}

/// Training rows ordered by distance to `query`, nearest first, `count` of them.
std::vector<std::size_t> nearest(const std::vector<std::vector<double>>& store,
                                 const std::vector<double>& query, std::size_t count) {
  std::vector<std::pair<double, std::size_t>> d(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) d[i] = {squared_distance(store[i], query), i};
  count = std::min(count, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(count), d.end());
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = d[i].second;
  return out;
}

double vote(const std::vector<bool>& labels, const std::vector<std::size_t>& order, std::size_t k) {
  k = std::min(k, order.size());
  std::size_t adv = 0;
  for (std::size_t i = 0; i < k; ++i) adv += labels[order[i]];
  return static_cast<double>(adv) / static_cast<double>(k);
}

}  // namespace

DetectorModel fit_features(const std::vector<std::vector<double>>& rows,
                           const std::vector<bool>& adversarial, const DetectorConfig& cfg) {
  cfg.validate();
  if (rows.size() != adversarial.size()) throw InvalidArgument("fit: label count mismatch");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < rows.size(); ++i) (adversarial[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw InvalidArgument("fit: needs both natural and adversarial samples");

  // Stratified split so both labels appear on both sides.
  Rng rng(cfg.seed);
  Rng split_rng = rng.split("validation_split");
  std::vector<std::size_t> train_idx, val_idx;
  for (auto* group : {&neg, &pos}) {
    split_rng.shuffle(*group);
    auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(group->size())));
    if (n_val >= group->size()) n_val = group->size() - 1;
    val_idx.insert(val_idx.end(), group->begin(), group->begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), group->begin() + static_cast<std::ptrdiff_t>(n_val), group->end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  DetectorModel model;
  model.n_curve = cfg.n_curve;
  model.ablate_logits = cfg.ablate_logits;
  std::vector<std::vector<double>> train_rows;
  for (auto i : train_idx) train_rows.push_back(rows[i]);
  model.standardizer = Standardizer::fit(train_rows);
  for (const auto& r : train_rows) model.features.push_back(model.standardizer.apply(r));
  for (auto i : train_idx) model.labels.push_back(adversarial[i]);

  // Without a validation split, k is chosen on the training rows themselves.
  const auto& eval_idx = val_idx.empty() ? train_idx : val_idx;
  const std::size_t k_max = *std::max_element(cfg.k_grid.begin(), cfg.k_grid.end());
  const auto neighbor_lists = parallel_map<std::vector<std::size_t>>(eval_idx.size(), [&](std::size_t i) {
    return nearest(model.features, model.standardizer.apply(rows[eval_idx[i]]), k_max);
  });

  double best_acc = -1.0;
  for (auto k : cfg.k_grid) {
    if (k > model.features.size() && best_acc >= 0.0) continue;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < eval_idx.size(); ++i)
      hits += (vote(model.labels, neighbor_lists[i], k) >= 0.5) == adversarial[eval_idx[i]];
    const double acc = static_cast<double>(hits) / static_cast<double>(eval_idx.size());
    if (acc > best_acc) {
      best_acc = acc;
      model.k = k;
    }
  }
  model.validation_accuracy = best_acc;
  return model;
}

DetectorModel fit(const Network& net, const TemplateSet& templates,
                  const std::vector<DetectorSample>& samples, const DetectorConfig& cfg) {
  cfg.validate();
  const auto rows = parallel_map<std::vector<double>>(samples.size(), [&](std::size_t i) {
    return featurize(net, samples[i].input, templates, cfg.n_curve).flat(cfg.ablate_logits);
  });
  std::vector<bool> labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) labels[i] = samples[i].adversarial;
  DetectorModel model = fit_features(rows, labels, cfg);
  model.templates = templates;
  return model;
}

Prediction predict_features(const DetectorModel& model, const std::vector<double>& raw) {
  if (!model.fitted()) throw InvalidArgument("predict: detector is not fitted");
  const auto order = nearest(model.features, model.standardizer.apply(raw), model.k);
  const double score = vote(model.labels, order, model.k);
  return {score, score >= 0.5};
}

Prediction predict(const DetectorModel& model, const Network& net, const Tensor& x) {
  if (!model.fitted()) throw InvalidArgument("predict: detector is not fitted");
  return predict_features(model, featurize(net, x, model.templates, model.n_curve).flat(model.ablate_logits));
}

std::vector<AttackMetrics> evaluate_scores(const std::vector<double>& scores,
                                           const std::vector<DetectorSample>& test) {
  if (scores.size() != test.size()) throw InvalidArgument("evaluate: score count mismatch");
  std::map<std::string, std::vector<std::size_t>> by_attack;
  std::vector<std::size_t> naturals;
  for (std::size_t i = 0; i < test.size(); ++i)
    (test[i].adversarial ? by_attack[test[i].attack] : naturals).push_back(i);

  auto metrics_for = [&](const std::string& name, const std::vector<std::size_t>& adv) {
    std::vector<double> s;
    std::vector<bool> pos;
    for (auto i : naturals) s.push_back(scores[i]), pos.push_back(false);
    for (auto i : adv) s.push_back(scores[i]), pos.push_back(true);
    AttackMetrics m{name, threshold_accuracy(s, pos), 0.0, s.size()};
    m.auc = naturals.empty() || adv.empty() ? std::nan("") : roc_auc(s, pos);
    return m;
  };

  std::vector<AttackMetrics> out;
  std::vector<std::size_t> all_adv;
  for (const auto& [name, idx] : by_attack) {
    out.push_back(metrics_for(name, idx));
    all_adv.insert(all_adv.end(), idx.begin(), idx.end());
  }
  std::sort(all_adv.begin(), all_adv.end());
  out.push_back(metrics_for("pooled", all_adv));
  return out;
}

std::vector<AttackMetrics> evaluate(const DetectorModel& model, const Network& net,
                                    const std::vector<DetectorSample>& test) {
  const auto scores = parallel_map<double>(
      test.size(), [&](std::size_t i) { return predict(model, net, test[i].input).score; });
  return evaluate_scores(scores, test);
}

void save_detector(const DetectorModel& model, const std::filesystem::path& path) {
  if (!model.fitted()) throw InvalidArgument("save_detector: detector is not fitted");
  const std::size_t rows = model.features.size(), dim = model.features.front().size();
  nlohmann::json meta = {{"format", "detector"},
                         {"n_curve", model.n_curve},
                         {"ablate_logits", model.ablate_logits},
                         {"k", model.k},
                         {"validation_accuracy", model.validation_accuracy},
                         {"mean", model.standardizer.mean},
                         {"scale", model.standardizer.scale},
                         {"template_losses", model.templates.losses},
                         {"blob", path.filename().string() + ".blob"}};
  std::vector<NamedTensor> tensors;
  for (std::size_t c = 0; c < model.templates.inputs.size(); ++c)
    tensors.emplace_back("template." + std::to_string(c), model.templates.inputs[c]);
  std::vector<double> flat;
  flat.reserve(rows * dim);
  for (const auto& r : model.features) flat.insert(flat.end(), r.begin(), r.end());
  tensors.emplace_back("features", Tensor({rows, dim}, std::move(flat)));
  std::vector<double> labels(model.labels.begin(), model.labels.end());
  tensors.emplace_back("labels", Tensor({rows}, std::move(labels)));

  write_blob_file(path.string() + ".blob", {{"format", "detector_data"}}, tensors);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << meta.dump(2) << '\n';
}

DetectorModel load_detector(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("detector JSON: ") + e.what(), 0);
  }
  if (meta.value("format", "") != "detector") throw FormatError("not a detector file", 0);
  const auto blob = read_blob_file(path.parent_path() / meta.at("blob").get<std::string>());

  DetectorModel model;
  model.n_curve = meta.at("n_curve");
  model.ablate_logits = meta.at("ablate_logits");
  model.k = meta.at("k");
  model.validation_accuracy = meta.at("validation_accuracy");
  model.standardizer.mean = meta.at("mean").get<std::vector<double>>();
  model.standardizer.scale = meta.at("scale").get<std::vector<double>>();
  model.templates.losses = meta.at("template_losses").get<std::vector<double>>();
  for (const auto& [name, t] : blob.tensors) {
    if (name.rfind("template.", 0) == 0) {
      model.templates.inputs.push_back(t);
    } else if (name == "features") {
      const std::size_t rows = t.shape()[0], dim = t.shape()[1];
      for (std::size_t r = 0; r < rows; ++r)
        model.features.emplace_back(t.values().begin() + static_cast<std::ptrdiff_t>(r * dim),
                                    t.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
    } else if (name == "labels") {
      for (double v : t.data()) model.labels.push_back(v != 0.0);
    }
  }
  if (model.features.size() != model.labels.size() || model.features.empty())
    throw FormatError("detector blob: feature and label counts disagree", 0);
  return model;
}

}  // namespace modeconn
