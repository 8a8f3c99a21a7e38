#pragma once

#include <stdexcept>
#include <string>

namespace acrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (parse failures, validation failures).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or precondition on arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that cannot be combined.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Stored artifact failed an integrity check.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace acrec
