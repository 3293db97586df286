#pragma once

#include <stdexcept>
#include <string>

namespace ltv {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/grid dimensions do not line up.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A configuration value is inconsistent or out of range.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// An input value violates an operation precondition.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Non-finite values or numeric breakdown.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward without forward).
class StateError : public Error {
public:
  using Error::Error;
};

/// Binary file format violation (magic, version, truncation).
class FormatError : public Error {
public:
  using Error::Error;
};

/// Text parse failure with location information in the message.
class ParseError : public Error {
public:
  using Error::Error;
};

/// Filesystem-level failure.
class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace ltv
