#pragma once

#include <cstddef>
#include <cstdint>

#include "modeconn/loss.hpp"

namespace modeconn {

/// Class-conditional images of Gaussian bumps. Bumps are laid out in chains
/// that form short strokes; every class has three fixed prototypes of three
/// strokes each (independent of `seed`), used by turns across the samples of
/// the class. Each sample jitters stroke ends, widths and heights and adds
/// pixel noise, all scaled by `spread`; spread = 0 leaves the prototypes
/// themselves. Pixels lie in [0, 1]. `seed` shuffles the class-major order.
LabeledDataset synth_dataset(std::size_t num_classes, std::size_t per_class, double spread,
                             std::uint64_t seed, std::size_t side = 28);

/// Deterministic split: the first `count` examples and the rest.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data, std::size_t count);

}  // namespace modeconn
