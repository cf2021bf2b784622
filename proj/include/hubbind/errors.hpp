#pragma once

#include <stdexcept>
#include <string>

namespace hubbind {

// Error hierarchy. The CLI maps each family onto an exit code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid shapes, arguments or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not conform.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Non-finite values, divergence, failed numeric preconditions.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File could not be read/written, or its contents are corrupt or of the wrong version.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hubbind
