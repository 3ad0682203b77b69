#pragma once

#include <stdexcept>
#include <string>

namespace logitds {

// Failure classes. The CLI maps each to its own exit code.

/// Invalid configuration or argument (bad flag values, inconsistent architecture).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed or missing input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training or scoring.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace logitds
