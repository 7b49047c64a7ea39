// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace acenet {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyper-parameter or network/training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data such as an out-of-range class id.
class DataError : public Error {
 public:
  using Error::Error;
};

/// File system or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant was found broken at run time.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace acenet
