#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modeconn/attacks.hpp"
#include "modeconn/connector.hpp"
#include "modeconn/loss.hpp"
#include "modeconn/network.hpp"
#include "modeconn/stats.hpp"
#include "modeconn/synth.hpp"
#include "modeconn/train.hpp"

namespace modeconn {

class InsufficientData : public Error {
 public:
  explicit InsufficientData(const std::string& message) : Error("insufficient_data", message) {}
};

// ---- barrier statistics ----

struct BarrierStatsConfig {
  std::size_t pairs_per_class = 7;
  std::size_t drop_per_class = 2;
  std::size_t curve_points = 250;
  /// Admission threshold for the real endpoints.
  double low_loss_threshold = 1e-3;
  TargetedConfig targeted{};
  /// Replace the targeted attack by the identity: the adversarial partner of
  /// every pair is the real partner itself.
  bool identity_attack = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BarrierRow {
  std::size_t class_index = 0;
  std::size_t anchor = 0;   // dataset index of the real endpoint
  std::size_t partner = 0;  // dataset index of the real partner, or of the attack source
  double loss_anchor = 0.0;
  double loss_partner = 0.0;
  double max_loss = 0.0;
  double gap = 0.0;
  double argmax_alpha = 0.0;
  bool attack_success = true;
};

struct BarrierStatsReport {
  std::string scenario;  // "real_real" or "real_adversarial"
  std::vector<BarrierRow> rows;
  Summary max_summary;
  Summary gap_summary;
};

/// Both branches over every class of `data`. Per class, `pairs_per_class`
/// distinct pairs of low-loss same-class inputs are drawn; the real-real
/// branch interpolates each pair, the real-adversarial branch replaces the
/// partner by a targeted attack toward the class built from a random input of
/// another class. Each branch drops the `drop_per_class` pairs with the
/// largest endpoint-loss difference.
std::pair<BarrierStatsReport, BarrierStatsReport> run_barrier_stats(const Network& net,
                                                                    const LabeledDataset& data,
                                                                    const BarrierStatsConfig& cfg);

void write_barrier_rows_csv(std::ostream& out, const BarrierStatsReport& report);
nlohmann::json to_json(const BarrierStatsReport& report);

// ---- untrained connectivity ----

struct UntrainedConfig {
  Shape input_shape = {1, 28, 28};
  std::size_t num_classes = 10;
  FvoConfig fvo = [] {
    FvoConfig c;
    c.loss_threshold = 0.0005;
    c.hf_weight = 2.5e-7;
    return c;
  }();
  ConnectorConfig connector = [] {
    ConnectorConfig c;
    c.delta = 0.001;
    c.clamp_range.reset();
    return c;
  }();
  /// Weight scale of the fresh net; see Network::initialize.
  double init_gain = 2.449489742783178;
  /// Longest path that counts as a success.
  std::size_t max_segments = 4;
  std::uint64_t seed = 0;
};

struct UntrainedPairRow {
  std::size_t class_index = 0;
  bool generated = false;
  std::string error;  // generation or connection failure
  double loss_first = 0.0;
  double loss_second = 0.0;
  double primary_max = 0.0;
  bool primary_connected = false;
  bool connected = false;
  std::size_t segments = 0;
  double final_max = 0.0;
};

struct UntrainedReport {
  std::uint64_t seed = 0;
  std::vector<UntrainedPairRow> rows;
  std::size_t generated = 0;
  std::size_t successes = 0;  // connected with at most max_segments segments
  double success_rate = 0.0;  // over generated pairs
};

/// Fresh reference CNN initialized from `seed`; one diverse optimal pair per
/// class, each connected with the connector settings.
UntrainedReport run_untrained_connectivity(const UntrainedConfig& cfg);
nlohmann::json to_json(const UntrainedReport& report);

// ---- training evolution ----

struct EvolutionConfig {
  TrainConfig train{};
  std::size_t batch_checkpoints = 30;
  std::size_t epoch_checkpoints = 30;
  std::size_t pairs_per_class = 5;
  std::size_t curve_points = 250;
  FvoConfig fvo = [] {
    FvoConfig c;
    c.loss_threshold = 0.005;
    return c;
  }();
  std::uint64_t seed = 0;  // network initialization and optima seeds
};

struct EvolutionRow {
  std::string phase;  // "batch" or "epoch"
  std::size_t index = 0;
  std::size_t pairs = 0;
  std::size_t failures = 0;
  double mean_barrier = 0.0;
  double std_barrier = 0.0;
  std::vector<double> mean_curve;
  std::vector<double> std_curve;
};

/// Trains a reference CNN on `data` and, at checkpoint 0 (untrained) and after
/// each of the first batches and epochs, regenerates the same-seeded optimal
/// pairs and records their primary curves.
std::vector<EvolutionRow> run_training_evolution(const LabeledDataset& data, const EvolutionConfig& cfg);

/// One row per checkpoint: phase,index,pairs,failures,mean_barrier,std_barrier.
void write_evolution_csv(std::ostream& out, const std::vector<EvolutionRow>& rows);
/// Long format: phase,index,alpha,mean_loss,std_loss.
void write_evolution_curves_csv(std::ostream& out, const std::vector<EvolutionRow>& rows);

}  // namespace modeconn
