#pragma once

#include <stdexcept>
#include <string>

namespace ocsb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or parameter dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A layer or operation was configured with values that cannot work
/// (zero-sized output, unknown architecture, bad window, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Inputs failed validation (weights vs graph, manifest rows, flags).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The evaluation protocol cannot be carried out on the given data.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Degenerate geometry during alignment (coincident eyes).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A training problem with no solution (single class, empty input).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace ocsb
