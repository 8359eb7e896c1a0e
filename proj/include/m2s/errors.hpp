#pragma once

#include <stdexcept>
#include <string>

namespace m2s {

/// Tensor shapes or spatial sizes that do not satisfy an operation's contract.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values (non-positive widths, K larger than the grid, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke a precondition that is not about shapes or configuration.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A non-finite value showed up during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be read, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace m2s
