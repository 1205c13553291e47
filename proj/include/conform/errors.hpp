#pragma once

#include <stdexcept>
#include <string>

namespace conform {

/// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Token or element index outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Caller violated an operation's precondition (non-scalar backward, empty negatives, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid token groups or run configuration. `field()` names the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Non-finite value produced or consumed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input for which a quantity is undefined (zero-norm vector, metric with no pairs).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// File could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace conform
