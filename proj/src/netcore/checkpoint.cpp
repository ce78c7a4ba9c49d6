#include "modeconn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "modeconn/errors.hpp"

namespace modeconn {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void put_f32(std::ostream& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError(std::string("truncated blob while reading ") + what,
                        offset_ + static_cast<std::size_t>(in_.gcount()));
    offset_ += n;
  }

  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    read(reinterpret_cast<char*>(b), 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  double f32(const char* what) {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4, what);
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | b[i];
    return static_cast<double>(std::bit_cast<float>(bits));
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

Shape shape_from_json(const nlohmann::json& j) {
  Shape s;
  for (const auto& d : j) s.push_back(d.get<std::size_t>());
  return s;
}

}  // namespace

Tensor round_to_float(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

void write_blob(std::ostream& out, nlohmann::json meta, const std::vector<NamedTensor>& tensors) {
  if (!meta.is_object()) meta = nlohmann::json::object();
  auto list = nlohmann::json::array();
  for (const auto& [name, t] : tensors) list.push_back({{"name", name}, {"shape", t.shape()}});
  meta["tensors"] = list;
  const std::string header = meta.dump();
  out.write(kBlobMagic, sizeof kBlobMagic);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : tensors)
    for (double v : t.data()) put_f32(out, v);
  if (!out) throw IoError("failed writing blob");
}

Blob read_blob(std::istream& in) {
  Reader r(in);
  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kBlobMagic, 8) != 0) throw FormatError("bad blob magic", 0);
  const std::uint64_t header_len = r.u64("header length");
  if (header_len > (std::uint64_t{1} << 31)) throw FormatError("implausible header length", 8);
  std::string header(header_len, '\0');
  r.read(header.data(), header.size(), "header");
  Blob blob;
  try {
    blob.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what(), 16);
  }
  if (!blob.header.contains("tensors") || !blob.header["tensors"].is_array())
    throw FormatError("header lacks a tensors array", 16);
  for (const auto& entry : blob.header["tensors"]) {
    Shape shape = shape_from_json(entry.at("shape"));
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = r.f32("tensor payload");
    blob.tensors.emplace_back(entry.at("name").get<std::string>(),
                              Tensor(std::move(shape), std::move(values)));
  }
  return blob;
}

void write_blob_file(const std::filesystem::path& path, nlohmann::json meta,
                     const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_blob(out, std::move(meta), tensors);
}

Blob read_blob_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_blob(in);
}

nlohmann::json network_header(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers())
    layers.push_back({{"kind", std::string(to_string(l.kind))},
                      {"in", l.in},
                      {"out", l.out},
                      {"kernel", l.kernel},
                      {"stride", l.stride}});
  return {{"format", "network"},
          {"input_shape", net.input_shape()},
          {"num_classes", net.num_classes()},
          {"seed", net.seed()},
          {"layers", layers}};
}

void save_network(const Network& net, std::ostream& out) {
  std::vector<NamedTensor> tensors;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& p = net.params()[l];
    if (p.weight.empty()) continue;
    tensors.emplace_back("layer" + std::to_string(l) + ".weight", p.weight);
    tensors.emplace_back("layer" + std::to_string(l) + ".bias", p.bias);
  }
  write_blob(out, network_header(net), tensors);
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_network(net, out);
}

Network load_network(std::istream& in) {
  Blob blob = read_blob(in);
  const auto& h = blob.header;
  if (h.value("format", "") != "network") throw FormatError("blob is not a network checkpoint", 16);
  std::vector<LayerSpec> layers;
  try {
    for (const auto& l : h.at("layers")) {
      LayerSpec spec;
      spec.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      spec.in = l.at("in").get<std::size_t>();
      spec.out = l.at("out").get<std::size_t>();
      spec.kernel = l.at("kernel").get<std::size_t>();
      spec.stride = l.at("stride").get<std::size_t>();
      layers.push_back(spec);
    }
    Network net(shape_from_json(h.at("input_shape")), std::move(layers));
    net.set_seed(h.value("seed", std::uint64_t{0}));
    std::size_t next = 0;
    for (auto& p : net.params()) {
      if (p.weight.empty()) continue;
      if (next + 2 > blob.tensors.size()) throw FormatError("checkpoint is missing tensors", 16);
      auto& w = blob.tensors[next++].second;
      auto& b = blob.tensors[next++].second;
      if (!w.same_shape(p.weight) || !b.same_shape(p.bias))
        throw FormatError("checkpoint tensor shape does not match layer", 16);
      p.weight = std::move(w);
      p.bias = std::move(b);
    }
    if (next != blob.tensors.size()) throw FormatError("checkpoint has extra tensors", 16);
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network header: ") + e.what(), 16);
  }
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_network(in);
}

}  // namespace modeconn
