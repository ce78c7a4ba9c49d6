#include "modeconn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "modeconn/errors.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

std::vector<TrainLogEntry> train(Network& net, const LabeledDataset& data, const TrainConfig& cfg,
                                 const TrainCallback& on_batch) {
  if (data.size() == 0) throw InvalidArgument("train: empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("batch_size", "must be positive");
  data.validate();
  if (data.num_classes > net.num_classes())
    throw InvalidArgument("dataset has more classes than the network outputs");

  std::vector<double> flat = flatten(net.params());
  AdamState state(flat.size());
  std::vector<double> step(flat.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  const Rng root(cfg.seed);
  std::vector<TrainLogEntry> log;
  std::size_t batch_counter = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = root.split(epoch);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const auto bg = param_gradient(net, data, batch);
      ++batch_counter;
      if (!std::isfinite(bg.mean_loss))
        throw TrainingDiverged("loss is not finite at batch " + std::to_string(batch_counter) +
                               " (epoch " + std::to_string(epoch) + ")");
      const auto grad = flatten(bg.grads);
      adam_step(state, grad, cfg.adam, step);
      for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += step[i];
      unflatten(flat, net.params());

      TrainLogEntry entry{batch_counter, epoch, bg.mean_loss};
      log.push_back(entry);
      if (on_batch) on_batch(net, entry, end == order.size());
    }
  }
  return log;
}

}  // namespace modeconn
