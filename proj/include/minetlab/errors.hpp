#pragma once

#include <stdexcept>

#include "minetlab/tensor.hpp"

namespace minetlab {

/// Invalid or inconsistent configuration. `path` is the offending key path
/// when the error comes from a config file.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg, std::string path = {})
      : std::invalid_argument(path.empty() ? msg : path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Missing, unreadable or malformed input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or other numeric breakdown during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace minetlab
