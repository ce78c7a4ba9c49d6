#include "modeconn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "modeconn/errors.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

namespace {

/// A stroke: a chain of small bumps evenly spaced from (r0, c0) to (r1, c1).
struct Stroke {
  double r0, c0, r1, c1, width, height;
};

constexpr std::size_t kStrokesPerClass = 3;
constexpr std::size_t kBumpsPerStroke = 7;
constexpr std::size_t kVariantsPerClass = 3;

/// Prototypes come from a fixed stream so every seed draws the same classes.
std::vector<Stroke> prototype(std::size_t cls, std::size_t variant, std::size_t side) {
  Rng rng = Rng(0x70726f746fULL).split(cls).split(variant);
  const double s = static_cast<double>(side);
  std::vector<Stroke> strokes;
  for (std::size_t k = 0; k < kStrokesPerClass; ++k) {
    const double r = rng.uniform(0.25 * s, 0.75 * s), c = rng.uniform(0.25 * s, 0.75 * s);
    const double angle = rng.uniform(0.0, 3.141592653589793);
    const double half = rng.uniform(0.12 * s, 0.25 * s);
    strokes.push_back({r - half * std::sin(angle), c - half * std::cos(angle), r + half * std::sin(angle),
                       c + half * std::cos(angle), rng.uniform(0.04 * s, 0.055 * s), rng.uniform(0.8, 1.0)});
  }
  return strokes;
}

Tensor render(const std::vector<Stroke>& strokes, std::size_t side, double spread, Rng& rng) {
  const double s = static_cast<double>(side);
  Tensor img({1, side, side});
  for (Stroke st : strokes) {
    st.r0 += spread * 0.03 * s * rng.normal();
    st.c0 += spread * 0.03 * s * rng.normal();
    st.r1 += spread * 0.03 * s * rng.normal();
    st.c1 += spread * 0.03 * s * rng.normal();
    st.width *= std::max(0.3, 1.0 + spread * 0.1 * rng.normal());
    st.height *= std::max(0.2, 1.0 + spread * 0.15 * rng.normal());
    for (std::size_t b = 0; b < kBumpsPerStroke; ++b) {
      const double t = static_cast<double>(b) / static_cast<double>(kBumpsPerStroke - 1);
      const double br = st.r0 + t * (st.r1 - st.r0), bc = st.c0 + t * (st.c1 - st.c0);
      for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) {
          const double dr = static_cast<double>(i) - br, dc = static_cast<double>(j) - bc;
          img[i * side + j] = std::max(img[i * side + j],
                                       st.height * std::exp(-(dr * dr + dc * dc) / (2.0 * st.width * st.width)));
        }
    }
  }
  for (auto& v : img.data()) v = std::clamp(v + spread * 0.05 * rng.normal(), 0.0, 1.0);
  return img;
}

}  // namespace

LabeledDataset synth_dataset(std::size_t num_classes, std::size_t per_class, double spread,
                             std::uint64_t seed, std::size_t side) {
  if (num_classes == 0) throw InvalidArgument("synth_dataset: num_classes must be positive");
  if (per_class == 0) throw InvalidArgument("synth_dataset: per_class must be positive");
  if (!(spread >= 0.0)) throw InvalidArgument("synth_dataset: spread must be nonnegative");
  if (side < 8) throw InvalidArgument("synth_dataset: side must be at least 8");
  const Rng root(seed);
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::vector<Stroke>> variants;
    for (std::size_t v = 0; v < kVariantsPerClass; ++v) variants.push_back(prototype(c, v, side));
    for (std::size_t k = 0; k < per_class; ++k) {
      Rng rng = root.split(c).split(k);
      inputs.push_back(render(variants[k % kVariantsPerClass], side, spread, rng));
      labels.push_back(c);
    }
  }
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = root.split("order");
  shuffle_rng.shuffle(order);
  LabeledDataset data;
  data.num_classes = num_classes;
  for (auto i : order) {
    data.inputs.push_back(std::move(inputs[i]));
    data.labels.push_back(labels[i]);
  }
  return data;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data, std::size_t count) {
  if (count > data.size()) throw InvalidArgument("split_dataset: count exceeds dataset size");
  LabeledDataset a, b;
  a.num_classes = b.num_classes = data.num_classes;
  a.inputs.assign(data.inputs.begin(), data.inputs.begin() + static_cast<std::ptrdiff_t>(count));
  a.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(count));
  b.inputs.assign(data.inputs.begin() + static_cast<std::ptrdiff_t>(count), data.inputs.end());
  b.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(count), data.labels.end());
  return {std::move(a), std::move(b)};
}

}  // namespace modeconn
