#pragma once

#include <stdexcept>
#include <string>

namespace pmp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or feature widths.
struct DimensionError : Error {
  using Error::Error;
};

/// A scalar hyperparameter outside its valid range.
struct ParameterError : Error {
  using Error::Error;
};

/// Class or element index out of range.
struct IndexError : Error {
  using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar root.
struct UsageError : Error {
  using Error::Error;
};

/// Inconsistent experiment or layer configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed file contents.
struct ParseError : Error {
  using Error::Error;
};

/// A metric whose formula is undefined for the given input.
struct UndefinedMetricError : Error {
  using Error::Error;
};

}  // namespace pmp
