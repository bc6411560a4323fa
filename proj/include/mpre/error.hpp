#pragma once

#include <stdexcept>
#include <string>

namespace mpre {

// Invalid configuration, hyperparameters, or mismatched dimensions between
// a model and the data it is applied to.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not conform for a primitive.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values met during a forward pass or an optimizer step.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mpre
