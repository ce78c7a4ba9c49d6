#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modeconn {

/// Base of every error the library throws. `kind()` is a stable
/// machine-readable tag used in CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape_error", message) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error("invalid_argument", message) {}
};

/// A configuration value failed validation; `field()` names it.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error("config_error", field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::size_t offset)
      : Error("format_error", message + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const std::string& message)
      : Error("training_diverged", message) {}
};

class OptimizationError : public Error {
 public:
  explicit OptimizationError(const std::string& message)
      : Error("optimization_error", message) {}
};

}  // namespace modeconn
