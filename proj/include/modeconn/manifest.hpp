#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace modeconn {

std::string sha1_hex(std::string_view bytes);
/// SHA-1 of "blob <size>\0<contents>", the hash git assigns to file contents.
std::string git_blob_hash(std::string_view contents);
std::string git_blob_hash_file(const std::filesystem::path& path);

/// Record of one CLI run, written next to its outputs.
class Manifest {
 public:
  Manifest(std::string command, nlohmann::json config, std::uint64_t seed);

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  /// Starts or stops a named wall-clock timer.
  void start(const std::string& phase);
  void stop(const std::string& phase);

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;

 private:
  using Clock = std::chrono::steady_clock;
  std::string command_;
  nlohmann::json config_;
  std::uint64_t seed_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
  std::vector<std::pair<std::string, Clock::time_point>> running_;
  nlohmann::json timings_ = nlohmann::json::object();
  std::string started_at_;
};

}  // namespace modeconn
