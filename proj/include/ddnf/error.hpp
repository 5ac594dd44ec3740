#pragma once

#include <stdexcept>
#include <string>

namespace ddnf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, singular cells, integrator step underflow.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid specification or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File access failures and malformed documents.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddnf
