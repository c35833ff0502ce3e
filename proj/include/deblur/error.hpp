#pragma once

#include <stdexcept>
#include <string>

namespace deblur {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined by an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked on an object in the wrong state (missing grads, empty stats).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Unrecognized or unsupported file format (bad magic, unknown image type).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File ended before its declared content.
class TruncatedError : public Error {
 public:
  using Error::Error;
};

class CrcError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Stored tensor disagrees with the shape the caller expects.
class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

/// Dataset problems: missing files, unmatched pairs, images too small.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced during training, or a failed numerical verification.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace deblur
