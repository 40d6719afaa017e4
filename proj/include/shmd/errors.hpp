#pragma once

#include <stdexcept>
#include <string>

namespace shmd {

// Invalid configuration, specs, or arguments (CLI exit code 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor/layer shapes (CLI exit code 1).
struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// File and stream problems (CLI exit code 2).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values, divergence (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Misuse of the autodiff graph (double backward, backward without recording).
struct GraphError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace shmd
