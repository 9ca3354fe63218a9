#pragma once

#include <stdexcept>
#include <string>

namespace dapperfl {

/// Invalid static configuration: layer chains, ratios, hyperparameters, config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arguments that do not fit the object they are applied to (shapes, labels, empty data).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values encountered during an update.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk data (IDX files).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dapperfl
