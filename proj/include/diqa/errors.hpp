#pragma once

#include <stdexcept>
#include <string>

namespace diqa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor extent did not match what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A model or run configuration is inconsistent with the requested operation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in the wrong order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Input data failed validation (manifest rows, score ranges, split counts).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded (checkpoint, image, CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A numeric quantity is undefined for the given input (e.g. zero variance).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace diqa
