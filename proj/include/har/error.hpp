#pragma once

#include <stdexcept>
#include <string>

namespace har {

/// Base class for every error this library raises on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes do not line up for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Class index outside the label set.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf showed up where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Problem reading or interpreting input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem trouble (unwritable path, refused overwrite, ...).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace har
