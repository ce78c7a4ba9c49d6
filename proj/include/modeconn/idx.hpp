#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "modeconn/loss.hpp"
#include "modeconn/tensor.hpp"

namespace modeconn {

/// Unsigned-byte IDX images (magic 0x00000803, dims count/rows/cols, all
/// big-endian) as (1, rows, cols) tensors scaled to [0, 1].
std::vector<Tensor> read_idx_images(std::istream& in);
/// Unsigned-byte IDX labels (magic 0x00000801).
std::vector<std::size_t> read_idx_labels(std::istream& in);

/// Pixels are written as round(255 * v) after clamping to [0, 1], so parsed
/// files re-serialize to identical bytes.
void write_idx_images(std::ostream& out, const std::vector<Tensor>& images);
void write_idx_labels(std::ostream& out, const std::vector<std::size_t>& labels);

/// Reads an image/label file pair. `num_classes` defaults to max label + 1.
/// Throws FormatError on bad magic, truncation or a count mismatch.
LabeledDataset ingest_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                          std::optional<std::size_t> num_classes = std::nullopt);
void write_idx_dataset(const LabeledDataset& data, const std::filesystem::path& images,
                       const std::filesystem::path& labels);

}  // namespace modeconn
