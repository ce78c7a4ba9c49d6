#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "modeconn/adam.hpp"
#include "modeconn/loss.hpp"
#include "modeconn/network.hpp"

namespace modeconn {

struct TrainConfig {
  AdamConfig adam{};
  std::size_t epochs = 2;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;  // drives the per-epoch shuffle
};

struct TrainLogEntry {
  std::size_t batch = 0;  // 1-based, counted across epochs
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean batch loss before the update
};

/// Called after every parameter update. `end_of_epoch` is set on the last
/// batch of each epoch.
using TrainCallback =
    std::function<void(const Network& net, const TrainLogEntry& entry, bool end_of_epoch)>;

/// Minibatch Adam on mean cross-entropy. Updates `net` in place and returns the
/// per-batch log. Throws TrainingDiverged when a batch loss is not finite.
std::vector<TrainLogEntry> train(Network& net, const LabeledDataset& data, const TrainConfig& cfg,
                                 const TrainCallback& on_batch = {});

}  // namespace modeconn
