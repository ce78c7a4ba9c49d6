#include "modeconn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include "modeconn/parallel.hpp"
#include "modeconn/paths.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

void BarrierStatsConfig::validate() const {
  if (pairs_per_class == 0) throw ConfigError("pairs_per_class", "must be positive");
  if (drop_per_class >= pairs_per_class) throw ConfigError("drop_per_class", "must be below pairs_per_class");
  if (curve_points < 2) throw ConfigError("curve_points", "must be at least 2");
  if (!(low_loss_threshold > 0.0)) throw ConfigError("low_loss_threshold", "must be positive");
}

namespace {

struct PairTask {
  std::size_t cls, a, b, source;
};

BarrierRow curve_row(const Network& net, const Tensor& x_a, const Tensor& x_b, std::size_t y,
                     std::size_t points) {
  const LossCurve curve = sample_loss_curve(net, Path{{x_a, x_b}, y}, points);
  const BarrierReport rep = find_barrier(curve);
  BarrierRow row;
  row.class_index = y;
  row.loss_anchor = rep.endpoint_losses.first;
  row.loss_partner = rep.endpoint_losses.second;
  row.max_loss = rep.max_loss;
  row.gap = rep.gap;
  row.argmax_alpha = rep.argmax_alpha;
  return row;
}

/// Keeps all but the `drop` rows of each class with the largest endpoint-loss
/// difference. Rows stay in task order.
BarrierStatsReport filtered(std::string scenario, const std::vector<BarrierRow>& rows,
                            std::size_t per_class, std::size_t drop) {
  BarrierStatsReport report;
  report.scenario = std::move(scenario);
  for (std::size_t start = 0; start < rows.size(); start += per_class) {
    std::vector<std::size_t> order(per_class);
    for (std::size_t i = 0; i < per_class; ++i) order[i] = start + i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      return std::abs(rows[i].loss_anchor - rows[i].loss_partner) >
             std::abs(rows[j].loss_anchor - rows[j].loss_partner);
    });
    std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end());
    std::sort(keep.begin(), keep.end());
    for (auto i : keep) report.rows.push_back(rows[i]);
  }
  std::vector<double> maxes, gaps;
  for (const auto& r : report.rows) maxes.push_back(r.max_loss), gaps.push_back(r.gap);
  report.max_summary = summarize(maxes);
  report.gap_summary = summarize(gaps);
  return report;
}

}  // namespace

std::pair<BarrierStatsReport, BarrierStatsReport> run_barrier_stats(const Network& net,
                                                                    const LabeledDataset& data,
                                                                    const BarrierStatsConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.num_classes != net.num_classes())
    throw InvalidArgument("run_barrier_stats: dataset and network disagree on the class count");
  if (data.num_classes < 2) throw InvalidArgument("run_barrier_stats: needs at least two classes");
  const auto losses = parallel_map<double>(
      data.size(), [&](std::size_t i) { return loss_at(net, data.inputs[i], data.labels[i]); });

  const Rng root(cfg.seed);
  std::vector<PairTask> tasks;
  for (std::size_t y = 0; y < data.num_classes; ++y) {
    std::vector<std::size_t> cand;
    for (auto i : data.indices_of(y))
      if (losses[i] <= cfg.low_loss_threshold) cand.push_back(i);
    if (cand.size() < cfg.pairs_per_class || cand.size() * (cand.size() - 1) / 2 < cfg.pairs_per_class)
      throw InsufficientData("class " + std::to_string(y) + " has " + std::to_string(cand.size()) +
                             " inputs with loss <= " + std::to_string(cfg.low_loss_threshold) + ", need " +
                             std::to_string(cfg.pairs_per_class));
    Rng rng = root.split("pairs").split(y);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    while (seen.size() < cfg.pairs_per_class) {
      const std::size_t a = cand[rng.below(cand.size())], b = cand[rng.below(cand.size())];
      if (a == b || !seen.insert({std::min(a, b), std::max(a, b)}).second) continue;
      std::size_t other = rng.below(data.num_classes - 1);
      if (other >= y) ++other;
      const auto pool = data.indices_of(other);
      tasks.push_back({y, a, b, pool[rng.below(pool.size())]});
    }
  }

  struct Both {
    BarrierRow real, adv;
  };
  const auto results = parallel_map<Both>(tasks.size(), [&](std::size_t t) {
    const PairTask& task = tasks[t];
    Both out;
    out.real = curve_row(net, data.inputs[task.a], data.inputs[task.b], task.cls, cfg.curve_points);
    out.real.anchor = task.a;
    out.real.partner = task.b;
    if (cfg.identity_attack) {
      out.adv = out.real;
    } else {
      const auto adv = targeted_optimization(net, data.inputs[task.source], data.labels[task.source],
                                             task.cls, cfg.targeted);
      out.adv = curve_row(net, data.inputs[task.a], adv.adversarial, task.cls, cfg.curve_points);
      out.adv.anchor = task.a;
      out.adv.partner = task.source;
      out.adv.attack_success = adv.success;
    }
    return out;
  });

  std::vector<BarrierRow> real, adv;
  for (const auto& r : results) real.push_back(r.real), adv.push_back(r.adv);
  return {filtered("real_real", real, cfg.pairs_per_class, cfg.drop_per_class),
          filtered("real_adversarial", adv, cfg.pairs_per_class, cfg.drop_per_class)};
}

void write_barrier_rows_csv(std::ostream& out, const BarrierStatsReport& report) {
  out << "scenario,class,anchor,partner,loss_anchor,loss_partner,max_loss,gap,argmax_alpha,attack_success\n";
  out << std::setprecision(17);
  for (const auto& r : report.rows)
    out << report.scenario << ',' << r.class_index << ',' << r.anchor << ',' << r.partner << ','
        << r.loss_anchor << ',' << r.loss_partner << ',' << r.max_loss << ',' << r.gap << ','
        << r.argmax_alpha << ',' << (r.attack_success ? 1 : 0) << '\n';
}

nlohmann::json to_json(const BarrierStatsReport& report) {
  std::size_t successes = 0;
  for (const auto& r : report.rows) successes += r.attack_success;
  return {{"scenario", report.scenario},
          {"pairs", report.rows.size()},
          {"attack_successes", successes},
          {"max_loss", to_json(report.max_summary)},
          {"gap", to_json(report.gap_summary)}};
}

UntrainedReport run_untrained_connectivity(const UntrainedConfig& cfg) {
  cfg.fvo.validate();
  cfg.connector.validate();
  Network net = Network::reference_cnn(cfg.input_shape, cfg.num_classes);
  net.initialize(cfg.seed, cfg.init_gain);
  const Rng root = Rng(cfg.seed).split("untrained_optima");

  UntrainedReport report;
  report.seed = cfg.seed;
  report.rows = parallel_map<UntrainedPairRow>(cfg.num_classes, [&](std::size_t y) {
    UntrainedPairRow row;
    row.class_index = y;
    const Rng cls = root.split(y);
    std::pair<FvoResult, FvoResult> pair;
    try {
      pair = generate_diverse_pair(net, y, cfg.fvo, cls.split(0).next_u64() | 1, cls.split(1).next_u64() & ~1ULL);
    } catch (const Error& e) {
      row.error = e.what();
      return row;
    }
    row.generated = true;
    row.loss_first = pair.first.loss;
    row.loss_second = pair.second.loss;
    ConnectResult result;
    try {
      result = connect(net, pair.first.input, pair.second.input, y, cfg.connector);
    } catch (const NotConnectedError& e) {
      result = e.best();
      row.error = e.what();
    } catch (const Error& e) {
      row.error = e.what();
      return row;
    }
    const BarrierReport primary = find_barrier(result.primary);
    row.primary_max = primary.max_loss;
    row.primary_connected = is_delta_connected(result.primary, cfg.connector.delta);
    row.connected = result.connected;
    row.segments = result.path.segments();
    row.final_max = find_barrier(result.curve).max_loss;
    return row;
  });
  for (const auto& r : report.rows) {
    report.generated += r.generated;
    report.successes += r.generated && r.connected && r.segments <= cfg.max_segments;
  }
  report.success_rate =
      report.generated == 0 ? 0.0 : static_cast<double>(report.successes) / static_cast<double>(report.generated);
  return report;
}

nlohmann::json to_json(const UntrainedReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"class", r.class_index},
                    {"generated", r.generated},
                    {"error", r.error},
                    {"loss_first", r.loss_first},
                    {"loss_second", r.loss_second},
                    {"primary_max", r.primary_max},
                    {"primary_connected", r.primary_connected},
                    {"connected", r.connected},
                    {"segments", r.segments},
                    {"final_max", r.final_max}});
  return {{"seed", report.seed},
          {"generated", report.generated},
          {"successes", report.successes},
          {"success_rate", report.success_rate},
          {"pairs", rows}};
}

std::vector<EvolutionRow> run_training_evolution(const LabeledDataset& data, const EvolutionConfig& cfg) {
  data.validate();
  if (data.size() == 0) throw InvalidArgument("run_training_evolution: empty dataset");
  if (cfg.pairs_per_class == 0) throw ConfigError("pairs_per_class", "must be positive");
  if (cfg.curve_points < 2) throw ConfigError("curve_points", "must be at least 2");
  cfg.fvo.validate();

  Network net = Network::reference_cnn(data.inputs.front().shape(), data.num_classes);
  net.initialize(cfg.seed);

  struct Checkpoint {
    std::string phase;
    std::size_t index;
    ParamSet params;
  };
  std::vector<Checkpoint> checkpoints;
  if (cfg.batch_checkpoints > 0) checkpoints.push_back({"batch", 0, net.params()});
  if (cfg.epoch_checkpoints > 0) checkpoints.push_back({"epoch", 0, net.params()});

  TrainConfig tc = cfg.train;
  tc.epochs = std::max<std::size_t>(cfg.epoch_checkpoints, cfg.batch_checkpoints > 0 ? 1 : 0);
  const std::size_t batches_per_epoch = (data.size() + tc.batch_size - 1) / tc.batch_size;
  tc.epochs = std::max(tc.epochs, (cfg.batch_checkpoints + batches_per_epoch - 1) / batches_per_epoch);
  if (tc.epochs > 0)
    train(net, data, tc, [&](const Network& n, const TrainLogEntry& e, bool end_of_epoch) {
      if (e.batch <= cfg.batch_checkpoints) checkpoints.push_back({"batch", e.batch, n.params()});
      if (end_of_epoch && e.epoch <= cfg.epoch_checkpoints) checkpoints.push_back({"epoch", e.epoch, n.params()});
    });
  std::stable_sort(checkpoints.begin(), checkpoints.end(),
                   [](const Checkpoint& a, const Checkpoint& b) { return a.phase < b.phase; });

  const std::size_t per_checkpoint = data.num_classes * cfg.pairs_per_class;
  const Rng root = Rng(cfg.seed).split("evolution_optima");
  struct PairCurve {
    bool ok = false;
    std::vector<double> losses;
  };
  const auto curves = parallel_map<PairCurve>(checkpoints.size() * per_checkpoint, [&](std::size_t t) {
    const Checkpoint& ck = checkpoints[t / per_checkpoint];
    const std::size_t y = (t % per_checkpoint) / cfg.pairs_per_class, k = t % cfg.pairs_per_class;
    Network snapshot = net;
    snapshot.params() = ck.params;
    const Rng pr = root.split(y).split(k);
    PairCurve pc;
    try {
      const auto a = generate_optimal_input(snapshot, y, cfg.fvo, pr.split(0).next_u64());
      const auto b = generate_optimal_input(snapshot, y, cfg.fvo, pr.split(1).next_u64());
      pc.losses = sample_loss_curve(snapshot, Path{{a.input, b.input}, y}, cfg.curve_points).losses;
      pc.ok = true;
    } catch (const ThresholdNotReached&) {
    }
    return pc;
  });

  std::vector<EvolutionRow> rows;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    EvolutionRow row;
    row.phase = checkpoints[c].phase;
    row.index = checkpoints[c].index;
    row.mean_curve.assign(cfg.curve_points, 0.0);
    row.std_curve.assign(cfg.curve_points, 0.0);
    std::vector<const PairCurve*> ok;
    for (std::size_t t = c * per_checkpoint; t < (c + 1) * per_checkpoint; ++t)
      (curves[t].ok ? ok.push_back(&curves[t]) : void(++row.failures));
    row.pairs = ok.size();
    if (!ok.empty()) {
      std::vector<double> heights;
      for (const auto* pc : ok) heights.push_back(*std::max_element(pc->losses.begin(), pc->losses.end()));
      const Summary s = summarize(heights);
      row.mean_barrier = s.mean;
      row.std_barrier = s.stddev;
      const double m = static_cast<double>(ok.size());
      for (std::size_t i = 0; i < cfg.curve_points; ++i) {
        double sum = 0.0;
        for (const auto* pc : ok) sum += pc->losses[i];
        const double mean = sum / m;
        double ss = 0.0;
        for (const auto* pc : ok) ss += (pc->losses[i] - mean) * (pc->losses[i] - mean);
        row.mean_curve[i] = mean;
        row.std_curve[i] = ok.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_evolution_csv(std::ostream& out, const std::vector<EvolutionRow>& rows) {
  out << "phase,index,pairs,failures,mean_barrier,std_barrier\n" << std::setprecision(17);
  for (const auto& r : rows)
    out << r.phase << ',' << r.index << ',' << r.pairs << ',' << r.failures << ',' << r.mean_barrier << ','
        << r.std_barrier << '\n';
}

void write_evolution_curves_csv(std::ostream& out, const std::vector<EvolutionRow>& rows) {
  out << "phase,index,alpha,mean_loss,std_loss\n" << std::setprecision(17);
  for (const auto& r : rows) {
    const std::size_t n = r.mean_curve.size();
    for (std::size_t i = 0; i < n; ++i)
      out << r.phase << ',' << r.index << ',' << static_cast<double>(i) / static_cast<double>(n - 1) << ','
          << r.mean_curve[i] << ',' << r.std_curve[i] << '\n';
  }
}

}  // namespace modeconn
