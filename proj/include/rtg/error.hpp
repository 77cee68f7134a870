#pragma once

#include <stdexcept>
#include <string>

namespace rtg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or precondition violation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared while evaluating or training a network.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A persisted file could not be parsed.
class MalformedFile : public Error {
 public:
  using Error::Error;
};

/// A persisted file carries a format version this build does not read.
class VersionMismatch : public Error {
 public:
  using Error::Error;
};

/// Failure inside one stage of an experiment pipeline.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace rtg
