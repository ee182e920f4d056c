#pragma once

#include <stdexcept>
#include <string>

namespace nullwave {

/// Bad input: malformed configuration, invalid system, violated precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation failed numerically (overflow, NaN, unresolved grid, ...).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double time = 0.0)
      : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace nullwave
