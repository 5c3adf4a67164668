#pragma once

#include <stdexcept>
#include <string>

namespace iif {

/// Base of every failure raised by the toolkit. The CLI maps each subclass
/// to a stable exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (bad shape, empty input,
/// out-of-range parameter).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Unknown config key, malformed value, or inconsistent settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, singular systems, solver breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable, truncated, or malformed on disk.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Operation requested for a model kind that does not support it.
class Unsupported : public Error {
 public:
  using Error::Error;
};

}  // namespace iif
