#pragma once

#include <stdexcept>
#include <string>

namespace msdm {

/// Errors are grouped by how the CLI reports them: bad configuration or
/// usage (exit 1), bad input data (exit 2), numerical failure (exit 3).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfBounds : public DataError {
 public:
  using DataError::DataError;
};

class NodataInWindow : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateBand : public DataError {
 public:
  using DataError::DataError;
};

class UnknownSpecies : public DataError {
 public:
  using DataError::DataError;
};

class MismatchedUniverse : public DataError {
 public:
  using DataError::DataError;
};

class ShapeMismatch : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NoForwardState : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NumericalDomain : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A requested receptive field cannot be built from the encoder's rf/jump.
class Unreachable : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace msdm
