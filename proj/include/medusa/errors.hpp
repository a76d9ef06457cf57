#pragma once

#include <stdexcept>
#include <string>

namespace medusa {

// Invalid inputs: malformed files, bad identifiers, out-of-range parameters.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown during iterative computation (non-finite values etc.).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace medusa
