#pragma once

#include <stdexcept>
#include <string>

namespace balgan {

// Base of every error the library raises. The CLI maps the concrete
// subclasses onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not line up for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, geometry or configuration file content.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Missing, malformed or inconsistent input data (manifests, images).
class DataError : public Error {
 public:
  using Error::Error;
};

// Checkpoint / archive could not be read back.
class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

// A loss or activation became NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace balgan
