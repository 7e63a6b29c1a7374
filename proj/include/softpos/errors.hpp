#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace softpos {

/// Invalid arguments or violated preconditions (dimension mismatch, bad
/// ranges, malformed input files).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration document failed validation. `path()` names the offending
/// key, e.g. "$.identification.orders[2]".
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::string path, const std::string& what)
      : InvalidInput(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A numerical procedure could not produce a valid result (non-convergence,
/// rank deficiency, unstable design).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace softpos
