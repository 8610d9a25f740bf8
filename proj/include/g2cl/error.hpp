#pragma once

#include <stdexcept>
#include <string>

namespace g2cl {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad hyperparameters, unknown keys, unknown backbone.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data: manifests, images, feature stores.
class DataError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition (e.g. dimension mismatch).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Training produced a NaN/Inf loss.
class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

}  // namespace g2cl
