#pragma once

#include <stdexcept>
#include <string>

namespace docbin {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or image shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A forward op produced NaN or Inf from finite inputs.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API precondition (e.g. non-scalar loss).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent dataset contents (unpaired ids, mismatched sizes, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace docbin
