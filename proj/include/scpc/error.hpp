#pragma once

#include <stdexcept>
#include <string>

namespace scpc {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or grid geometry do not line up.
class DimensionError : public Error {
public:
  using Error::Error;
};

// NaN/Inf where a finite value was required.
class NumericError : public Error {
public:
  using Error::Error;
};

// Invalid configuration value or combination.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Misuse of the autodiff tape (double backward, non-scalar loss, ...).
class TapeError : public Error {
public:
  using Error::Error;
};

// Malformed or truncated file.
class FormatError : public Error {
public:
  using Error::Error;
};

class TruncationError : public FormatError {
public:
  using FormatError::FormatError;
};

// Checkpoint was written for a different architecture.
class ConfigMismatchError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace scpc
