#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modeconn/network.hpp"
#include "modeconn/tensor.hpp"

namespace modeconn {

/// Blob container shared by network checkpoints and saved inputs:
///   8 bytes  magic "MCNET1\0\0"
///   8 bytes  header length n, unsigned little-endian
///   n bytes  UTF-8 JSON header; its "tensors" array lists {name, shape}
///   payload  every tensor as IEEE-754 binary32 little-endian, in header order
inline constexpr char kBlobMagic[8] = {'M', 'C', 'N', 'E', 'T', '1', '\0', '\0'};

using NamedTensor = std::pair<std::string, Tensor>;

struct Blob {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;
};

/// `meta` is merged into the header; the "tensors" key is filled in here.
void write_blob(std::ostream& out, nlohmann::json meta, const std::vector<NamedTensor>& tensors);
Blob read_blob(std::istream& in);

void write_blob_file(const std::filesystem::path& path, nlohmann::json meta,
                     const std::vector<NamedTensor>& tensors);
Blob read_blob_file(const std::filesystem::path& path);

nlohmann::json network_header(const Network& net);
void save_network(const Network& net, const std::filesystem::path& path);
void save_network(const Network& net, std::ostream& out);
Network load_network(const std::filesystem::path& path);
Network load_network(std::istream& in);

/// Rounds every value to binary32, as a save/load cycle would.
Tensor round_to_float(const Tensor& t);

}  // namespace modeconn
