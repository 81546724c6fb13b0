#pragma once

#include <stdexcept>
#include <string>

namespace pnar {

/// Bad input: malformed files, inconsistent dimensions, parameters outside their domain.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation that cannot proceed numerically (singular matrix, exploding mean).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}
}  // namespace detail

}  // namespace pnar
