#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedhm {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer extents do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An operation was called in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A value is outside its permitted range.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the byte offset at which parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Experiment configuration problem; names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config field `" + field + "`: " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace fedhm
