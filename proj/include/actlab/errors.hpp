#pragma once

#include <stdexcept>
#include <string>

namespace actlab {

/// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (non-scalar loss, bad label, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Out-of-range hyperparameter (alpha <= 0, delta <= 0, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid network / experiment / CLI configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or Inf produced by a forward or update step.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken invariant inside the library itself.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Missing or truncated input file, failed write.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File present but not in the expected binary layout.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace actlab
