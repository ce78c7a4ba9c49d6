#include "modeconn/idx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "modeconn/errors.hpp"

namespace modeconn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string slurp(std::istream& in) {
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) throw FormatError(std::string("truncated IDX ") + what, bytes.size());
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

void check_magic(std::uint32_t got, std::uint32_t want) {
  if (got != want) {
    std::ostringstream msg;
    msg << "bad IDX magic 0x" << std::hex << got << ", expected 0x" << want;
    throw FormatError(msg.str(), 0);
  }
}

std::vector<std::size_t> parse_labels(const std::string& bytes) {
  check_magic(read_be32(bytes, 0, "label header"), kLabelMagic);
  const std::size_t count = read_be32(bytes, 4, "label header");
  if (bytes.size() < 8 + count)
    throw FormatError("truncated IDX labels: " + std::to_string(count) + " declared", bytes.size());
  std::vector<std::size_t> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

}  // namespace

std::vector<Tensor> read_idx_images(std::istream& in) {
  const std::string bytes = slurp(in);
  check_magic(read_be32(bytes, 0, "image header"), kImageMagic);
  const std::size_t count = read_be32(bytes, 4, "image header");
  const std::size_t rows = read_be32(bytes, 8, "image header");
  const std::size_t cols = read_be32(bytes, 12, "image header");
  if (rows == 0 || cols == 0) throw FormatError("IDX images with a zero dimension", 8);
  const std::size_t pixels = rows * cols;
  if (bytes.size() < 16 + count * pixels)
    throw FormatError("truncated IDX images: " + std::to_string(count) + " declared", bytes.size());
  std::vector<Tensor> images;
  images.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::vector<double> px(pixels);
    for (std::size_t i = 0; i < pixels; ++i)
      px[i] = static_cast<unsigned char>(bytes[16 + n * pixels + i]) / 255.0;
    images.emplace_back(Shape{1, rows, cols}, std::move(px));
  }
  return images;
}

std::vector<std::size_t> read_idx_labels(std::istream& in) { return parse_labels(slurp(in)); }

void write_idx_images(std::ostream& out, const std::vector<Tensor>& images) {
  if (images.empty()) throw InvalidArgument("write_idx_images: no images");
  const Shape& shape = images.front().shape();
  if (shape.size() != 3 || shape[0] != 1) throw ShapeError("write_idx_images: images must be (1, H, W)");
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  write_be32(out, static_cast<std::uint32_t>(shape[1]));
  write_be32(out, static_cast<std::uint32_t>(shape[2]));
  std::string buf(shape[1] * shape[2], '\0');
  for (const auto& img : images) {
    if (img.shape() != shape) throw ShapeError("write_idx_images: images differ in shape");
    for (std::size_t i = 0; i < img.size(); ++i)
      buf[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0)));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
}

void write_idx_labels(std::ostream& out, const std::vector<std::size_t>& labels) {
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels) {
    if (l > 255) throw InvalidArgument("write_idx_labels: label exceeds 255");
    out.put(static_cast<char>(l));
  }
}

LabeledDataset ingest_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                          std::optional<std::size_t> num_classes) {
  std::ifstream img_in(images, std::ios::binary);
  if (!img_in) throw IoError("cannot open " + images.string());
  std::ifstream lbl_in(labels, std::ios::binary);
  if (!lbl_in) throw IoError("cannot open " + labels.string());
  LabeledDataset data;
  data.inputs = read_idx_images(img_in);
  data.labels = read_idx_labels(lbl_in);
  if (data.inputs.size() != data.labels.size())
    throw FormatError("count mismatch: " + std::to_string(data.inputs.size()) + " images but " +
                          std::to_string(data.labels.size()) + " labels",
                      4);
  const std::size_t max_label = data.labels.empty() ? 0 : *std::max_element(data.labels.begin(), data.labels.end());
  data.num_classes = num_classes.value_or(max_label + 1);
  data.validate();
  return data;
}

void write_idx_dataset(const LabeledDataset& data, const std::filesystem::path& images,
                       const std::filesystem::path& labels) {
  data.validate();
  std::ofstream img_out(images, std::ios::binary);
  if (!img_out) throw IoError("cannot write " + images.string());
  write_idx_images(img_out, data.inputs);
  std::ofstream lbl_out(labels, std::ios::binary);
  if (!lbl_out) throw IoError("cannot write " + labels.string());
  write_idx_labels(lbl_out, data.labels);
}

}  // namespace modeconn
