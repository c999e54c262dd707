#pragma once

#include <stdexcept>
#include <string>

namespace pintda {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid parameter or malformed input (non-finite entries, indefinite
/// covariance, bad partition).
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value (model blow-up, divergent cost).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_dim(std::size_t got, std::size_t expected, const char* what) {
  if (got != expected) {
    throw DimensionError(std::string(what) + ": dimension " + std::to_string(got) +
                         " does not match expected " + std::to_string(expected));
  }
}

} // namespace detail
} // namespace pintda
