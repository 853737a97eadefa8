#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rcac {

/// Invalid argument supplied by the caller (bad index, dimension mismatch, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A size cap (state enumeration, exhaustive robustness check) was exceeded.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Singular systems, non-convergent iterations, non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration rejected at load/validation time. `field()` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A feature (or output-layer gradient) vector with zero norm made a
/// projection undefined.
class DegenerateFeatureError : public NumericError {
 public:
  using NumericError::NumericError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rcac
