#include "modeconn/manifest.hpp"

#include <openssl/sha.h>

#include <ctime>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "modeconn/errors.hpp"

namespace modeconn {

std::string sha1_hex(std::string_view bytes) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  std::ostringstream out;
  for (unsigned char b : digest) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(b);
  return out.str();
}

std::string git_blob_hash(std::string_view contents) {
  std::string framed = "blob " + std::to_string(contents.size());
  framed.push_back('\0');
  framed.append(contents);
  return sha1_hex(framed);
}

std::string git_blob_hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return git_blob_hash(bytes);
}

Manifest::Manifest(std::string command, nlohmann::json config, std::uint64_t seed)
    : command_(std::move(command)), config_(std::move(config)), seed_(seed) {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream ts;
  ts << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  started_at_ = ts.str();
}

void Manifest::add_input(const std::filesystem::path& path) {
  inputs_.push_back({{"path", path.string()}, {"sha1", git_blob_hash_file(path)}});
}

void Manifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }

void Manifest::start(const std::string& phase) { running_.emplace_back(phase, Clock::now()); }

void Manifest::stop(const std::string& phase) {
  for (auto it = running_.begin(); it != running_.end(); ++it)
    if (it->first == phase) {
      timings_[phase] = std::chrono::duration<double>(Clock::now() - it->second).count();
      running_.erase(it);
      return;
    }
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& p : outputs_) {
    nlohmann::json entry = {{"path", p}};
    if (std::filesystem::exists(p)) entry["sha1"] = git_blob_hash_file(p);
    outputs.push_back(entry);
  }
  return {{"command", command_}, {"config", config_},   {"seed", seed_},
          {"inputs", inputs_},   {"outputs", outputs},  {"timings_seconds", timings_},
          {"started_at", started_at_}};
}

void Manifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace modeconn
