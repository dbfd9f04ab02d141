#pragma once

#include <stdexcept>
#include <string>

namespace strc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor or image dimension does not match what an operation expects.
/// `dimension()` names the offending axis (e.g. "channels", "kernel[1]").
class ShapeError : public Error {
 public:
  ShapeError(const std::string& dimension, const std::string& message)
      : Error("shape mismatch in " + dimension + ": " + message), dimension_(dimension) {}

  const std::string& dimension() const noexcept { return dimension_; }

 private:
  std::string dimension_;
};

/// An API was called in the wrong order or with an invalid argument.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is missing or out of range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (missing directory, unreadable or unwritable file).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A payload could not be decoded (bad image header, truncated file).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A loss or parameter became NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace strc
