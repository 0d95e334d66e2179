#pragma once

#include <stdexcept>
#include <string>

namespace otplug {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: bad weights, mismatched domains, sizes over a cap.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A configuration file or command line could not be interpreted.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to reach its accuracy target.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace otplug
