// modeconn: command-line front end. Every subcommand writes its artifacts,
// result.json and manifest.json into --out.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "modeconn/attacks.hpp"
#include "modeconn/checkpoint.hpp"
#include "modeconn/connector.hpp"
#include "modeconn/dataset.hpp"
#include "modeconn/detector.hpp"
#include "modeconn/errors.hpp"
#include "modeconn/experiments.hpp"
#include "modeconn/idx.hpp"
#include "modeconn/loss.hpp"
#include "modeconn/manifest.hpp"
#include "modeconn/parallel.hpp"
#include "modeconn/paths.hpp"
#include "modeconn/percolation.hpp"
#include "modeconn/rng.hpp"
#include "modeconn/stats.hpp"
#include "modeconn/synth.hpp"
#include "modeconn/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace modeconn;

namespace {

struct DataOptions {
  std::string images;
  std::string labels;
  std::size_t classes = 10;
  std::size_t per_class = 100;
  double spread = 1.0;
  std::uint64_t data_seed = 0;
  std::size_t start = 0;
  std::size_t count = 0;  // 0 takes everything after `start`
};

struct NetOptions {
  std::string net;
  // Fresh network when --net is absent.
  std::string arch = "cnn";
  std::size_t classes = 10;
  std::size_t side = 28;
  double init_gain = 1.0;
};

struct Context {
  fs::path out;
  std::uint64_t seed = 0;
  Manifest* manifest = nullptr;

  fs::path file(const std::string& name) const { return out / name; }
  std::ofstream open(const std::string& name) const {
    std::ofstream f(file(name), std::ios::binary);
    if (!f) throw IoError("cannot write " + file(name).string());
    return f;
  }
  void wrote(const std::string& name) const { manifest->add_output(file(name)); }
};

using Runner = std::function<json(Context&)>;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) items.push_back(item);
  return items;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& field) {
  std::vector<std::size_t> values;
  for (const auto& item : split_list(text)) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      values.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError(field, "expected a comma-separated list of nonnegative integers, got '" + text + "'");
    }
  }
  return values;
}

void add_data_options(CLI::App* app, DataOptions& d) {
  app->add_option("--images", d.images, "IDX image file (synthetic data when absent)");
  app->add_option("--labels", d.labels, "IDX label file");
  app->add_option("--data-classes", d.classes, "synthetic classes");
  app->add_option("--data-per-class", d.per_class, "synthetic examples per class");
  app->add_option("--data-spread", d.spread, "synthetic within-class variation");
  app->add_option("--data-seed", d.data_seed, "synthetic data seed");
  app->add_option("--data-start", d.start, "first example used");
  app->add_option("--data-count", d.count, "examples used (0 = all remaining)");
}

void add_net_options(CLI::App* app, NetOptions& n, bool fresh_allowed) {
  app->add_option("--net", n.net, "network checkpoint")->check(CLI::ExistingFile);
  if (!fresh_allowed) return;
  app->add_option("--arch", n.arch, "fresh network: cnn or mlp");
  app->add_option("--classes", n.classes, "fresh network: output classes");
  app->add_option("--side", n.side, "fresh network: image side");
  app->add_option("--init-gain", n.init_gain, "fresh network: weight scale");
}

LabeledDataset load_data(const DataOptions& d, Context& ctx) {
  LabeledDataset all;
  if (!d.images.empty() || !d.labels.empty()) {
    if (d.images.empty()) throw ConfigError("images", "required with --labels");
    if (d.labels.empty()) throw ConfigError("labels", "required with --images");
    all = ingest_idx(d.images, d.labels);
    ctx.manifest->add_input(d.images);
    ctx.manifest->add_input(d.labels);
  } else {
    if (d.classes == 0) throw ConfigError("data-classes", "must be positive");
    if (d.per_class == 0) throw ConfigError("data-per-class", "must be positive");
    if (!(d.spread >= 0.0)) throw ConfigError("data-spread", "must be nonnegative");
    all = synth_dataset(d.classes, d.per_class, d.spread, d.data_seed);
  }
  if (d.start > all.size()) throw ConfigError("data-start", "beyond the dataset");
  const std::size_t end = d.count == 0 ? all.size() : d.start + d.count;
  if (end > all.size()) throw ConfigError("data-count", "beyond the dataset");
  LabeledDataset slice;
  slice.num_classes = all.num_classes;
  slice.inputs.assign(all.inputs.begin() + static_cast<std::ptrdiff_t>(d.start),
                      all.inputs.begin() + static_cast<std::ptrdiff_t>(end));
  slice.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(d.start),
                      all.labels.begin() + static_cast<std::ptrdiff_t>(end));
  if (slice.size() == 0) throw ConfigError("data-count", "selects no examples");
  return slice;
}

Network fresh_network(const NetOptions& n, std::uint64_t seed) {
  const Shape shape{1, n.side, n.side};
  if (n.classes < 2) throw ConfigError("classes", "needs at least two classes");
  Network net = n.arch == "cnn"   ? Network::reference_cnn(shape, n.classes)
                : n.arch == "mlp" ? Network::reference_mlp(shape, n.classes)
                                  : throw ConfigError("arch", "expected cnn or mlp, got '" + n.arch + "'");
  if (!(n.init_gain > 0.0)) throw ConfigError("init-gain", "must be positive");
  net.initialize(seed, n.init_gain);
  return net;
}

Network load_net(const NetOptions& n, Context& ctx, bool fresh_allowed) {
  if (n.net.empty()) {
    if (!fresh_allowed) throw ConfigError("net", "a network checkpoint is required");
    return fresh_network(n, ctx.seed);
  }
  ctx.manifest->add_input(n.net);
  return load_network(n.net);
}

void require_compatible(const Network& net, const LabeledDataset& data) {
  if (data.inputs.front().shape() != net.input_shape())
    throw ShapeError("data shape " + shape_string(data.inputs.front().shape()) +
                     " does not match network input " + shape_string(net.input_shape()));
  if (data.num_classes > net.num_classes())
    throw InvalidArgument("data has " + std::to_string(data.num_classes) + " classes, network " +
                          std::to_string(net.num_classes()));
}

// ---- shared option groups ----

struct ConnectorOptions {
  ConnectorConfig cfg;
  bool no_clamp = false;

  void add(CLI::App* app) {
    app->add_option("--lr", cfg.lr, "barrier optimizer learning rate");
    app->add_option("--iters", cfg.iters, "barrier optimizer iterations");
    app->add_option("--lambda-mse", cfg.lambda_mse, "weight of the MSE anchor");
    app->add_option("--lambda-hf", cfg.lambda_hf, "weight of the high-frequency penalty");
    app->add_option("--delta", cfg.delta, "loss threshold for connectivity");
    app->add_option("--max-depth", cfg.max_depth, "refinement depth limit");
    app->add_option("--primary-points", cfg.primary_points, "grid of the straight path");
    app->add_option("--points-per-segment", cfg.points_per_segment, "grid of refined segments");
    app->add_flag("--no-clamp", no_clamp, "do not clamp barrier points to [0, 1]");
  }
  ConnectorConfig get() const {
    ConnectorConfig c = cfg;
    if (no_clamp) c.clamp_range.reset();
    return c;
  }
};

struct FvoOptions {
  FvoConfig cfg;
  std::string objective = "cross_entropy";

  void add(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "init-std", cfg.init_std, "std of the starting noise");
    app->add_option("--" + prefix + "lr", cfg.lr, "Adam learning rate");
    app->add_option("--" + prefix + "weight-decay", cfg.weight_decay, "decay applied to the input");
    app->add_option("--" + prefix + "max-iters", cfg.max_iters, "iteration limit");
    app->add_option("--" + prefix + "threshold", cfg.loss_threshold, "target cross-entropy");
    app->add_option("--" + prefix + "hf-weight", cfg.hf_weight, "high-frequency penalty weight");
    app->add_option("--" + prefix + "objective", objective, "cross_entropy or surrogate");
  }
  FvoConfig get() const {
    FvoConfig c = cfg;
    if (objective == "cross_entropy")
      c.objective = FvoObjective::cross_entropy;
    else if (objective == "surrogate")
      c.objective = FvoObjective::surrogate;
    else
      throw ConfigError("objective", "expected cross_entropy or surrogate, got '" + objective + "'");
    c.validate();
    return c;
  }
};

struct AttackOptions {
  AttackConfig cfg;
  std::optional<double> cw_c;

  void add(CLI::App* app) {
    app->add_option("--epsilon", cfg.epsilon, "Linf budget of fgsm/bim/pgd");
    app->add_option("--steps", cfg.steps, "bim/pgd iterations");
    app->add_option("--step-size", cfg.step_size, "bim/pgd step");
    app->add_option("--cw-c", cw_c, "fixed C&W trade-off (binary search when absent)");
    app->add_option("--cw-steps", cfg.cw_steps, "C&W Adam steps per c");
    app->add_option("--cw-lr", cfg.cw_lr, "C&W learning rate");
    app->add_option("--cw-search-steps", cfg.cw_search_steps, "C&W binary-search rounds");
    app->add_option("--deepfool-max-iters", cfg.deepfool_max_iters, "DeepFool iteration limit");
    app->add_option("--deepfool-overshoot", cfg.deepfool_overshoot, "DeepFool overshoot");
  }
  AttackConfig get() const {
    AttackConfig c = cfg;
    c.cw_c = cw_c;
    return c;
  }
};

void add_targeted_options(CLI::App* app, TargetedConfig& t) {
  app->add_option("--targeted-lr", t.lr, "targeted attack learning rate");
  app->add_option("--targeted-iters", t.iters, "targeted attack iterations");
  app->add_option("--targeted-lambda-dev", t.lambda_dev, "targeted attack deviation weight");
  app->add_option("--targeted-lambda-hf", t.lambda_hf, "targeted attack high-frequency weight");
  app->add_option("--targeted-threshold", t.loss_threshold, "targeted attack success loss");
}

std::vector<AttackKind> parse_kinds(const std::string& text) {
  std::vector<AttackKind> kinds;
  for (const auto& item : split_list(text)) {
    try {
      kinds.push_back(attack_kind_from_string(item));
    } catch (const Error&) {
      throw ConfigError("attacks", "unknown attack '" + item + "'");
    }
  }
  if (kinds.empty()) throw ConfigError("attacks", "no attack kinds given");
  return kinds;
}

json barrier_json(const BarrierReport& b) {
  return {{"max_loss", b.max_loss},
          {"argmax_alpha", b.argmax_alpha},
          {"gap", b.gap},
          {"endpoint_losses", {b.endpoint_losses.first, b.endpoint_losses.second}}};
}

std::pair<std::size_t, std::size_t> pick_pair(const Network& net, const LabeledDataset& data,
                                              const std::string& pair, std::optional<std::size_t> cls,
                                              double max_loss, std::uint64_t seed) {
  if (!pair.empty()) {
    const auto idx = parse_sizes(pair, "pair");
    if (idx.size() != 2) throw ConfigError("pair", "expected two indices");
    if (idx[0] >= data.size() || idx[1] >= data.size()) throw ConfigError("pair", "index out of range");
    return {idx[0], idx[1]};
  }
  Rng rng = Rng(seed).split("pair");
  const std::size_t y = cls ? *cls : static_cast<std::size_t>(rng.below(data.num_classes));
  if (y >= data.num_classes) throw ConfigError("class", "out of range");
  std::vector<std::size_t> low;
  for (std::size_t i : data.indices_of(y))
    if (loss_at(net, data.inputs[i], y) <= max_loss) low.push_back(i);
  if (low.size() < 2)
    throw InsufficientData("class " + std::to_string(y) + " has fewer than two inputs with loss <= " +
                           std::to_string(max_loss));
  const std::size_t a = static_cast<std::size_t>(rng.below(low.size()));
  std::size_t b = static_cast<std::size_t>(rng.below(low.size() - 1));
  if (b >= a) ++b;
  return {low[a], low[b]};
}

// ---- subcommands ----

Runner setup_train(CLI::App* app) {
  struct Opts {
    DataOptions data;
    NetOptions net;
    TrainConfig train;
    std::size_t holdout = 0;
  };
  auto o = std::make_shared<Opts>();
  o->train.adam.lr = 0.001;
  add_data_options(app, o->data);
  app->add_option("--arch", o->net.arch, "cnn or mlp");
  app->add_option("--init-gain", o->net.init_gain, "weight scale");
  app->add_option("--epochs", o->train.epochs, "passes over the data");
  app->add_option("--batch-size", o->train.batch_size, "minibatch size");
  app->add_option("--train-lr", o->train.adam.lr, "Adam learning rate");
  app->add_option("--holdout", o->holdout, "final examples of the slice kept for testing");
  return [o](Context& ctx) {
    const auto data = load_data(o->data, ctx);
    if (o->holdout >= data.size()) throw ConfigError("holdout", "leaves no training data");
    auto [train_set, test_set] = split_dataset(data, data.size() - o->holdout);
    NetOptions n = o->net;
    n.classes = data.num_classes;
    n.side = data.inputs.front().shape().at(1);
    Network net = fresh_network(n, ctx.seed);
    if (o->train.epochs == 0) throw ConfigError("epochs", "must be positive");
    if (o->train.batch_size == 0) throw ConfigError("batch-size", "must be positive");
    if (!(o->train.adam.lr >= 0.0)) throw ConfigError("train-lr", "must be nonnegative");
    TrainConfig tc = o->train;
    tc.seed = Rng(ctx.seed).split("shuffle").next_u64();
    ctx.manifest->start("train");
    const auto log = train(net, train_set, tc);
    ctx.manifest->stop("train");
    save_network(net, ctx.file("net.mcnet"));
    ctx.wrote("net.mcnet");
    {
      auto f = ctx.open("train_log.csv");
      f << "batch,epoch,loss\n" << std::setprecision(17);
      for (const auto& e : log) f << e.batch << ',' << e.epoch << ',' << e.loss << '\n';
    }
    ctx.wrote("train_log.csv");
    json r = {{"train_examples", train_set.size()},
              {"train_accuracy", accuracy(net, train_set)},
              {"batches", log.size()},
              {"final_batch_loss", log.empty() ? 0.0 : log.back().loss},
              {"parameters", param_count(net.params())}};
    if (test_set.size() > 0) {
      r["test_examples"] = test_set.size();
      r["test_accuracy"] = accuracy(net, test_set);
    }
    return r;
  };
}

Runner setup_curve(CLI::App* app) {
  struct Opts {
    DataOptions data;
    NetOptions net;
    std::string pair;
    std::optional<std::size_t> cls;
    std::size_t points = 1000;
  };
  auto o = std::make_shared<Opts>();
  add_data_options(app, o->data);
  add_net_options(app, o->net, false);
  app->add_option("--pair", o->pair, "two dataset indices i,j")->required();
  app->add_option("--class", o->cls, "class of the loss (default: label of the first input)");
  app->add_option("--points", o->points, "grid size");
  return [o](Context& ctx) {
    const Network net = load_net(o->net, ctx, false);
    const auto data = load_data(o->data, ctx);
    require_compatible(net, data);
    const auto [i, j] = pick_pair(net, data, o->pair, std::nullopt, 0.0, ctx.seed);
    const std::size_t y = o->cls.value_or(data.labels[i]);
    if (y >= net.num_classes()) throw ConfigError("class", "out of range");
    if (o->points < 2) throw ConfigError("points", "must be at least 2");
    const LossCurve curve = sample_loss_curve(net, Path{{data.inputs[i], data.inputs[j]}, y}, o->points);
    {
      auto f = ctx.open("curve.csv");
      write_curve_csv(f, curve);
    }
    ctx.wrote("curve.csv");
    return json{{"pair", {i, j}}, {"class", y}, {"barrier", barrier_json(find_barrier(curve))}};
  };
}

Runner setup_connect(CLI::App* app) {
  struct Opts {
    DataOptions data;
    NetOptions net;
    ConnectorOptions connector;
    std::string pair;
    std::optional<std::size_t> cls;
  };
  auto o = std::make_shared<Opts>();
  add_data_options(app, o->data);
  add_net_options(app, o->net, false);
  o->connector.add(app);
  app->add_option("--pair", o->pair, "two same-class dataset indices i,j (random low-loss pair when absent)");
  app->add_option("--class", o->cls, "class of the random pair");
  return [o](Context& ctx) {
    const Network net = load_net(o->net, ctx, false);
    const auto data = load_data(o->data, ctx);
    require_compatible(net, data);
    const ConnectorConfig cfg = o->connector.get();
    cfg.validate();
    const auto [i, j] = pick_pair(net, data, o->pair, o->cls, cfg.delta, ctx.seed);
    if (data.labels[i] != data.labels[j]) throw ConfigError("pair", "inputs belong to different classes");
    const std::size_t y = data.labels[i];

    ConnectResult result;
    std::string error;
    ctx.manifest->start("connect");
    try {
      result = connect(net, data.inputs[i], data.inputs[j], y, cfg);
    } catch (const NotConnectedError& e) {
      result = e.best();
      error = e.what();
    }
    ctx.manifest->stop("connect");

    std::vector<NamedTensor> waypoints;
    for (std::size_t k = 0; k < result.path.waypoints.size(); ++k)
      waypoints.emplace_back("waypoint." + std::to_string(k), result.path.waypoints[k]);
    write_blob_file(ctx.file("path.mcnet"), {{"kind", "path"}, {"target_class", y}}, waypoints);
    ctx.wrote("path.mcnet");
    {
      auto f = ctx.open("curve.csv");
      write_curve_csv(f, result.curve);
    }
    ctx.wrote("curve.csv");
    {
      auto f = ctx.open("primary.csv");
      write_curve_csv(f, result.primary);
    }
    ctx.wrote("primary.csv");

    json refinements = json::array();
    for (const auto& r : result.refinements)
      refinements.push_back({{"level", r.level}, {"loss_before", r.loss_before}, {"loss_after", r.loss_after}});
    json r = {{"pair", {i, j}},
              {"class", y},
              {"connected", result.connected},
              {"segments", result.path.segments()},
              {"depth_used", result.depth_used},
              {"primary", barrier_json(find_barrier(result.primary))},
              {"final", barrier_json(find_barrier(result.curve))},
              {"segment_max_losses", segment_max_losses(result.curve)},
              {"refinements", refinements}};
    if (!error.empty()) r["error"] = error;
    return r;
  };
}

Runner setup_fvo(CLI::App* app) {
  struct Opts {
    NetOptions net;
    FvoOptions fvo;
    std::string classes = "0";
    bool diverse = false;
  };
  auto o = std::make_shared<Opts>();
  add_net_options(app, o->net, true);
  o->fvo.add(app);
  app->add_option("--target-classes", o->classes, "comma-separated classes to synthesize");
  app->add_flag("--diverse", o->diverse, "produce a pair per class, the second with the hf penalty");
  return [o](Context& ctx) {
    const Network net = load_net(o->net, ctx, true);
    const FvoConfig cfg = o->fvo.get();
    const auto classes = parse_sizes(o->classes, "target-classes");
    for (std::size_t y : classes)
      if (y >= net.num_classes()) throw ConfigError("target-classes", "class " + std::to_string(y) + " out of range");
    const Rng root = Rng(ctx.seed).split("fvo");
    struct Item {
      std::size_t cls = 0, member = 0;
      FvoResult result;
      bool reached = false;
    };
    const std::size_t members = o->diverse ? 2 : 1;
    const auto items = parallel_map<Item>(classes.size() * members, [&](std::size_t t) {
      Item it{classes[t / members], t % members, {}, true};
      FvoConfig c = cfg;
      if (it.member == 0 && o->diverse) c.hf_weight = 0.0;
      try {
        it.result = generate_optimal_input(net, it.cls, c, root.split(it.cls).split(it.member).next_u64());
      } catch (const ThresholdNotReached& e) {
        it.result = e.best();
        it.reached = false;
      }
      return it;
    });
    std::vector<NamedTensor> tensors;
    json rows = json::array();
    for (const auto& it : items) {
      const std::string name = "class." + std::to_string(it.cls) + "." + std::to_string(it.member);
      tensors.emplace_back(name, it.result.input);
      rows.push_back({{"name", name},
                      {"class", it.cls},
                      {"loss", it.result.loss},
                      {"iterations", it.result.iterations},
                      {"reached", it.reached}});
    }
    write_blob_file(ctx.file("optima.mcnet"), {{"kind", "optima"}}, tensors);
    ctx.wrote("optima.mcnet");
    return json{{"optima", rows}};
  };
}

Runner setup_attack(CLI::App* app) {
  struct Opts {
    DataOptions data;
    NetOptions net;
    AttackOptions attack;
    std::string kind = "fgsm";
    std::optional<std::size_t> target;
  };
  auto o = std::make_shared<Opts>();
  add_data_options(app, o->data);
  add_net_options(app, o->net, false);
  o->attack.add(app);
  add_targeted_options(app, o->attack.cfg.targeted);
  app->add_option("--kind", o->kind, "fgsm, bim, pgd, deepfool, cw or targeted_opt");
  app->add_option("--target", o->target, "target class of targeted_opt");
  return [o](Context& ctx) {
    const Network net = load_net(o->net, ctx, false);
    const auto data = load_data(o->data, ctx);
    require_compatible(net, data);
    AttackConfig cfg = o->attack.get();
    cfg.kind = parse_kinds(o->kind).front();
    cfg.validate();
    const Rng root = Rng(ctx.seed).split("attack");
    ctx.manifest->start("attack");
    const auto advs = parallel_map<AdversarialExample>(data.size(), [&](std::size_t i) {
      return run_attack(net, data.inputs[i], data.labels[i], cfg, root.split(i).next_u64(), o->target);
    });
    ctx.manifest->stop("attack");
    std::vector<NamedTensor> tensors;
    std::size_t successes = 0;
    double l2 = 0.0, linf = 0.0;
    {
      auto f = ctx.open("attacks.csv");
      f << "index,label,source_class,predicted_class,success,linf,l2\n" << std::setprecision(17);
      for (std::size_t i = 0; i < advs.size(); ++i) {
        const auto& a = advs[i];
        f << i << ',' << data.labels[i] << ',' << a.source_class << ',' << a.predicted_class << ','
          << (a.success ? 1 : 0) << ',' << a.linf << ',' << a.l2 << '\n';
        tensors.emplace_back("adversarial." + std::to_string(i), a.adversarial);
        successes += a.success;
        l2 += a.l2;
        linf = std::max(linf, a.linf);
      }
    }
    ctx.wrote("attacks.csv");
    write_blob_file(ctx.file("adversarial.mcnet"), {{"kind", "adversarial"}, {"attack", o->kind}}, tensors);
    ctx.wrote("adversarial.mcnet");
    const double n = static_cast<double>(advs.size());
    return json{{"attack", to_string(cfg.kind)},
                {"inputs", advs.size()},
                {"successes", successes},
                {"success_rate", static_cast<double>(successes) / n},
                {"mean_l2", l2 / n},
                {"max_linf", linf}};
  };
}

json metrics_json(const std::vector<AttackMetrics>& rows) {
  json out = json::array();
  for (const auto& m : rows) out.push_back({{"attack", m.attack}, {"accuracy", m.accuracy}, {"auc", m.auc}, {"n", m.n}});
  return out;
}

json sample_counts(const std::vector<DetectorSample>& samples) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.attack];
  return counts;
}

Runner setup_detect_fit(CLI::App* app) {
  struct Opts {
    DataOptions data;
    NetOptions net;
    AttackOptions attack;
    std::string attacks = "fgsm,deepfool,cw";
    DetectorConfig detector;
    std::string k_grid;
  };
  auto o = std::make_shared<Opts>();
  add_data_options(app, o->data);
  add_net_options(app, o->net, false);
  o->attack.add(app);
  app->add_option("--attacks", o->attacks, "comma-separated attacks used for training");
  app->add_option("--n-curve", o->detector.n_curve, "loss-curve points per feature");
  app->add_flag("--ablate-logits", o->detector.ablate_logits, "use the loss curve only");
  app->add_option("--k-grid", o->k_grid, "comma-separated candidate k");
  app->add_option("--validation-fraction", o->detector.validation_fraction, "share held out to pick k");
  return [o](Context& ctx) {
    const Network net = load_net(o->net, ctx, false);
    const auto data = load_data(o->data, ctx);
    require_compatible(net, data);
    DetectorConfig dc = o->detector;
    if (!o->k_grid.empty()) dc.k_grid = parse_sizes(o->k_grid, "k-grid");
    dc.seed = Rng(ctx.seed).split("detector").next_u64();
    dc.validate();
    const auto kinds = parse_kinds(o->attacks);
    ctx.manifest->start("samples");
    const auto samples = attack_samples(net, data, kinds, o->attack.get(), Rng(ctx.seed).split("attacks").next_u64());
    ctx.manifest->stop("samples");
    const TemplateSet templates = select_templates(net, data);
    ctx.manifest->start("fit");
    const DetectorModel model = fit(net, templates, samples, dc);
    ctx.manifest->stop("fit");
    save_detector(model, ctx.file("detector.json"));
    ctx.wrote("detector.json");
    ctx.wrote("detector.json.blob");
    return json{{"k", model.k},
                {"validation_accuracy", model.validation_accuracy},
                {"training_rows", model.features.size()},
                {"samples", sample_counts(samples)},
                {"template_losses", templates.losses}};
  };
}

Runner setup_detect_eval(CLI::App* app) {
  struct Opts {
    DataOptions data;
    NetOptions net;
    AttackOptions attack;
    std::string attacks = "fgsm,deepfool,cw";
    std::string detector;
  };
  auto o = std::make_shared<Opts>();
  add_data_options(app, o->data);
  add_net_options(app, o->net, false);
  o->attack.add(app);
  app->add_option("--attacks", o->attacks, "comma-separated attacks in the test set");
  app->add_option("--detector", o->detector, "detector.json written by detect-fit")
      ->required()
      ->check(CLI::ExistingFile);
  return [o](Context& ctx) {
    const Network net = load_net(o->net, ctx, false);
    const auto data = load_data(o->data, ctx);
    require_compatible(net, data);
    ctx.manifest->add_input(o->detector);
    ctx.manifest->add_input(o->detector + ".blob");
    const DetectorModel model = load_detector(o->detector);
    const auto kinds = parse_kinds(o->attacks);
    ctx.manifest->start("samples");
    const auto samples = attack_samples(net, data, kinds, o->attack.get(), Rng(ctx.seed).split("attacks").next_u64());
    ctx.manifest->stop("samples");
    ctx.manifest->start("evaluate");
    const auto rows = evaluate(model, net, samples);
    ctx.manifest->stop("evaluate");
    {
      auto f = ctx.open("metrics.csv");
      f << "attack,accuracy,auc,n\n" << std::setprecision(17);
      for (const auto& m : rows) f << m.attack << ',' << m.accuracy << ',' << m.auc << ',' << m.n << '\n';
    }
    ctx.wrote("metrics.csv");
    return json{{"metrics", metrics_json(rows)}, {"samples", sample_counts(samples)}};
  };
}

Runner setup_barrier_stats(CLI::App* app) {
  struct Opts {
    DataOptions data;
    NetOptions net;
    BarrierStatsConfig cfg;
  };
  auto o = std::make_shared<Opts>();
  add_data_options(app, o->data);
  add_net_options(app, o->net, false);
  app->add_option("--pairs-per-class", o->cfg.pairs_per_class, "pairs drawn per class");
  app->add_option("--drop-per-class", o->cfg.drop_per_class, "pairs dropped per class");
  app->add_option("--curve-points", o->cfg.curve_points, "interpolation grid");
  app->add_option("--low-loss", o->cfg.low_loss_threshold, "admission loss of real endpoints");
  app->add_flag("--identity-attack", o->cfg.identity_attack, "null experiment: the partner is not attacked");
  add_targeted_options(app, o->cfg.targeted);
  return [o](Context& ctx) {
    const Network net = load_net(o->net, ctx, false);
    const auto data = load_data(o->data, ctx);
    require_compatible(net, data);
    BarrierStatsConfig cfg = o->cfg;
    cfg.seed = ctx.seed;
    ctx.manifest->start("barrier_stats");
    const auto [rr, ra] = run_barrier_stats(net, data, cfg);
    ctx.manifest->stop("barrier_stats");
    for (const auto* rep : {&rr, &ra}) {
      const std::string name = rep->scenario + ".csv";
      auto f = ctx.open(name);
      write_barrier_rows_csv(f, *rep);
      f.close();
      ctx.wrote(name);
    }
    std::vector<double> gaps_adv, gaps_real;
    for (const auto& r : ra.rows) gaps_adv.push_back(r.gap);
    for (const auto& r : rr.rows) gaps_real.push_back(r.gap);
    const RankSumResult test = rank_sum_test(gaps_adv, gaps_real);
    return json{{"real_real", to_json(rr)},
                {"real_adversarial", to_json(ra)},
                {"gap_rank_sum", {{"u", test.u}, {"z", test.z}, {"p_greater", test.p_greater}, {"p_two_sided", test.p_two_sided}}}};
  };
}

Runner setup_evolve(CLI::App* app) {
  struct Opts {
    DataOptions data;
    EvolutionConfig cfg;
    FvoOptions fvo;
  };
  auto o = std::make_shared<Opts>();
  o->cfg.train.adam.lr = 0.001;
  o->fvo.cfg = o->cfg.fvo;
  add_data_options(app, o->data);
  app->add_option("--batch-checkpoints", o->cfg.batch_checkpoints, "checkpoints after the first batches");
  app->add_option("--epoch-checkpoints", o->cfg.epoch_checkpoints, "checkpoints after the first epochs");
  app->add_option("--pairs-per-class", o->cfg.pairs_per_class, "optimal pairs per class");
  app->add_option("--curve-points", o->cfg.curve_points, "interpolation grid");
  app->add_option("--batch-size", o->cfg.train.batch_size, "minibatch size");
  app->add_option("--train-lr", o->cfg.train.adam.lr, "Adam learning rate of training");
  o->fvo.add(app, "fvo-");
  return [o](Context& ctx) {
    const auto data = load_data(o->data, ctx);
    EvolutionConfig cfg = o->cfg;
    cfg.fvo = o->fvo.get();
    cfg.seed = ctx.seed;
    cfg.train.seed = Rng(ctx.seed).split("shuffle").next_u64();
    if (cfg.train.batch_size == 0) throw ConfigError("batch-size", "must be positive");
    ctx.manifest->start("evolve");
    const auto rows = run_training_evolution(data, cfg);
    ctx.manifest->stop("evolve");
    {
      auto f = ctx.open("evolution.csv");
      write_evolution_csv(f, rows);
    }
    ctx.wrote("evolution.csv");
    {
      auto f = ctx.open("evolution_curves.csv");
      write_evolution_curves_csv(f, rows);
    }
    ctx.wrote("evolution_curves.csv");
    json out = json::array();
    for (const auto& r : rows)
      out.push_back({{"phase", r.phase},
                     {"index", r.index},
                     {"pairs", r.pairs},
                     {"failures", r.failures},
                     {"mean_barrier", r.mean_barrier},
                     {"std_barrier", r.std_barrier}});
    return json{{"checkpoints", out}};
  };
}

Runner setup_untrained(CLI::App* app) {
  struct Opts {
    UntrainedConfig cfg;
    FvoOptions fvo;
    ConnectorOptions connector;
    std::size_t side = 28;
  };
  auto o = std::make_shared<Opts>();
  o->fvo.cfg = o->cfg.fvo;
  o->connector.cfg = o->cfg.connector;
  o->connector.no_clamp = true;
  app->add_option("--classes", o->cfg.num_classes, "output classes of the fresh network");
  app->add_option("--side", o->side, "image side");
  app->add_option("--init-gain", o->cfg.init_gain, "weight scale of the fresh network");
  app->add_option("--max-segments", o->cfg.max_segments, "longest path counted as a success");
  o->fvo.add(app, "fvo-");
  o->connector.add(app);
  return [o](Context& ctx) {
    UntrainedConfig cfg = o->cfg;
    cfg.input_shape = {1, o->side, o->side};
    cfg.fvo = o->fvo.get();
    cfg.connector = o->connector.get();
    cfg.seed = ctx.seed;
    ctx.manifest->start("untrained");
    const auto report = run_untrained_connectivity(cfg);
    ctx.manifest->stop("untrained");
    return to_json(report);
  };
}

Runner setup_percolate(CLI::App* app) {
  struct Opts {
    SweepConfig sweep;
    std::string mode = "discrete";
    std::string dims = "2,3,4,5,6,7";
    std::size_t side = 0;
    std::size_t dimension = 2;
    double param = 0.5;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--mode", o->mode, "discrete or threshold");
  app->add_option("--dims", o->dims, "sweep dimensions");
  app->add_option("--q", o->sweep.q, "sweep: dimension times connection probability");
  app->add_option("--max-sites", o->sweep.max_sites, "sweep: site budget per lattice");
  app->add_option("--seeds", o->sweep.seeds, "sweep: lattices per dimension");
  app->add_option("--pair-samples", o->sweep.pair_samples, "threshold mode: sampled pairs");
  app->add_flag("--periodic", o->sweep.periodic, "periodic boundaries");
  app->add_option("--side", o->side, "single lattice of this side instead of a sweep");
  app->add_option("--dimension", o->dimension, "single lattice: dimension");
  app->add_option("--param", o->param, "single lattice: p (discrete) or delta (threshold)");
  return [o](Context& ctx) {
    LatticeMode mode;
    try {
      mode = lattice_mode_from_string(o->mode);
    } catch (const Error&) {
      throw ConfigError("mode", "expected discrete or threshold, got '" + o->mode + "'");
    }
    if (o->side > 0) {
      LatticeConfig lc;
      lc.dimension = o->dimension;
      lc.side = o->side;
      lc.mode = mode;
      lc.param = o->param;
      lc.periodic = o->sweep.periodic;
      lc.seed = ctx.seed;
      lc.pair_samples = o->sweep.pair_samples;
      const auto r = simulate_lattice(lc);
      const std::size_t shown = std::min<std::size_t>(r.component_sizes.size(), 20);
      return json{{"dimension", r.dimension},
                  {"side", r.side},
                  {"mode", to_string(r.mode)},
                  {"param", r.param},
                  {"q", r.q},
                  {"components", r.component_sizes.size()},
                  {"largest_components", std::vector<std::size_t>(r.component_sizes.begin(), r.component_sizes.begin() + static_cast<std::ptrdiff_t>(shown))},
                  {"largest_fraction", r.largest_fraction},
                  {"pair_connectivity", r.pair_connectivity},
                  {"stderr_pair", r.stderr_pair},
                  {"mean_field_P", mean_field_P(r.q)}};
    }
    SweepConfig sc = o->sweep;
    sc.mode = mode;
    sc.dimensions = parse_sizes(o->dims, "dims");
    sc.seed = ctx.seed;
    ctx.manifest->start("sweep");
    const auto rows = connectivity_vs_dimension(sc);
    ctx.manifest->stop("sweep");
    {
      auto f = ctx.open("sweep.csv");
      write_sweep_csv(f, rows);
    }
    ctx.wrote("sweep.csv");
    json out = json::array();
    for (const auto& r : rows)
      out.push_back({{"d", r.dimension}, {"L", r.side}, {"param", r.param}, {"largest_frac", r.largest_fraction},
                     {"pair_conn", r.pair_connectivity}, {"stderr", r.stderr_pair}, {"mean_field_P", r.mean_field}});
    return json{{"mode", to_string(mode)}, {"q", sc.q}, {"rows", out}};
  };
}

Runner setup_lipschitz(CLI::App* app) {
  struct Opts {
    NetOptions net;
    double final_activation = 1.0;
    PowerIterationConfig power;
    std::optional<double> delta;
    std::optional<double> delta_prime;
    std::size_t probes = 0;
  };
  auto o = std::make_shared<Opts>();
  add_net_options(app, o->net, true);
  app->add_option("--final-activation", o->final_activation, "Lipschitz constant of the output map");
  app->add_option("--tol", o->power.tol, "power-iteration tolerance");
  app->add_option("--max-iters", o->power.max_iters, "power-iteration limit");
  app->add_option("--delta", o->delta, "output interval width for the grid pitch");
  app->add_option("--delta-prime", o->delta_prime, "margin inside the interval");
  app->add_option("--probes", o->probes, "random pairs checked against the bound");
  return [o](Context& ctx) {
    const Network net = load_net(o->net, ctx, true);
    PowerIterationConfig pc = o->power;
    pc.seed = Rng(ctx.seed).split("power").next_u64();
    const auto rep = lipschitz_bound(net, o->final_activation, pc);
    json r = {{"bound", rep.bound}, {"layer_norms", rep.layer_norms}, {"final_activation", rep.final_activation}};
    if (o->delta || o->delta_prime) {
      if (!o->delta || !o->delta_prime) throw ConfigError("delta-prime", "--delta and --delta-prime go together");
      const double eps = epsilon_grid(rep.bound, *o->delta, *o->delta_prime);
      r["epsilon"] = eps;
      r["cube_side"] = cube_side(eps, shape_size(net.input_shape()));
    }
    if (o->probes > 0) {
      const Rng root = Rng(ctx.seed).split("probes");
      const auto ratios = parallel_map<double>(o->probes, [&](std::size_t k) {
        Rng rng = root.split(k);
        Tensor x(net.input_shape()), dx(net.input_shape());
        for (auto& v : x.data()) v = rng.uniform();
        for (auto& v : dx.data()) v = rng.normal(0.0, 1e-2);
        return distance_l2(net.forward(x + dx), net.forward(x)) / norm_l2(dx);
      });
      const double worst = *std::max_element(ratios.begin(), ratios.end());
      r["probe_max_ratio"] = worst;
      r["probe_violations"] = std::count_if(ratios.begin(), ratios.end(), [&](double q) { return q > rep.bound; });
    }
    return r;
  };
}

// ---- config files ----

std::string json_scalar(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw ConfigError(key, "expected a string, number or boolean");
}

/// Expands `--config file.json` into flags placed right after the subcommand,
/// so that flags given on the command line win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app, std::string& config_path) {
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("config", "missing file name");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty() || rest.empty()) return rest;

  CLI::App* sub = nullptr;
  for (auto* s : app.get_subcommands([](CLI::App*) { return true; }))
    if (s->get_name() == rest.front()) sub = s;
  if (sub == nullptr) return rest;

  std::ifstream in(config_path);
  if (!in) throw IoError("cannot read config " + config_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ConfigError("config", "top level must be an object");

  std::vector<std::string> flags;
  for (const auto& [raw_key, value] : doc.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "help") throw ConfigError(raw_key, "unknown option for " + sub->get_name());
    if (value.is_null()) continue;
    if (value.is_array()) {
      std::string joined;
      for (const auto& item : value) joined += (joined.empty() ? "" : ",") + json_scalar(item, raw_key);
      flags.push_back("--" + key);
      flags.push_back(joined);
    } else if (opt->get_type_size() == 0) {
      flags.push_back("--" + key + "=" + json_scalar(value, raw_key));
    } else {
      flags.push_back("--" + key);
      flags.push_back(json_scalar(value, raw_key));
    }
  }
  rest.insert(rest.begin() + 1, flags.begin(), flags.end());
  return rest;
}

json resolved_options(const CLI::App* sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      cfg[name] = res.empty() ? std::string("true") : res.back();
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

void print_error(const std::string& kind, const std::string& message, const std::string& field = "") {
  json err = {{"error", kind}, {"message", message}};
  if (!field.empty()) err["field"] = field;
  std::cerr << err.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Input-space mode connectivity laboratory", "modeconn"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  std::string out = ".";
  std::uint64_t seed = 0;
  std::string config_flag;  // consumed by expand_config before parsing
  std::map<std::string, Runner> runners;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train the reference network"},
      {"curve", "loss along the straight path between two inputs"},
      {"connect", "bypass barriers between two same-class inputs"},
      {"fvo", "synthesize class-optimal inputs"},
      {"attack", "run an adversarial attack over a dataset slice"},
      {"detect-fit", "fit the loss-curve detector"},
      {"detect-eval", "evaluate a fitted detector"},
      {"barrier-stats", "barrier statistics of real-real and real-adversarial pairs"},
      {"evolve", "primary barriers of optimal pairs during training"},
      {"untrained", "connectivity of optimal inputs of a fresh network"},
      {"percolate", "site percolation on d-dimensional lattices"},
      {"lipschitz", "spectral Lipschitz bound of a network"},
  };
  const std::map<std::string, Runner (*)(CLI::App*)> setups = {
      {"train", setup_train},           {"curve", setup_curve},
      {"connect", setup_connect},       {"fvo", setup_fvo},
      {"attack", setup_attack},         {"detect-fit", setup_detect_fit},
      {"detect-eval", setup_detect_eval}, {"barrier-stats", setup_barrier_stats},
      {"evolve", setup_evolve},         {"untrained", setup_untrained},
      {"percolate", setup_percolate},   {"lipschitz", setup_lipschitz},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--config", config_flag, "JSON file of option values; command-line flags override it");
    runners[name] = setups.at(name)(sub);
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  try {
    args = expand_config(args, app, config_path);
  } catch (const ConfigError& e) {
    print_error(e.kind(), e.what(), e.field());
    return 2;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  json config = resolved_options(sub);
  config.erase("out");
  config.erase("seed");
  config.erase("config");
  Manifest manifest(sub->get_name(), config, seed);
  Context ctx{out, seed, &manifest};
  try {
    fs::create_directories(ctx.out);
    if (!config_path.empty()) manifest.add_input(config_path);
    manifest.start("total");
    const json result = runners.at(sub->get_name())(ctx);
    {
      auto f = ctx.open("result.json");
      f << result.dump(2) << '\n';
    }
    ctx.wrote("result.json");
    manifest.stop("total");
    manifest.write(ctx.file("manifest.json"));
    std::cout << result.dump() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    print_error(e.kind(), e.what(), e.field());
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
  }
  std::error_code ec;
  if (fs::is_directory(ctx.out, ec)) {
    try {
      manifest.write(ctx.file("manifest.json"));
    } catch (const std::exception&) {
    }
  }
  return 1;
}
