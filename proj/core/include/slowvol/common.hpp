#pragma once

#include <stdexcept>
#include <string>

namespace slowvol {

// Error taxonomy maps onto the CLI exit codes: validation_error -> 2,
// inconclusive_error -> 3, numerical_error -> 4.
class validation_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A study that ran but could not reach a usable conclusion (noise floor,
// indeterminate sign, ...). Carries enough context for the exit path.
class inconclusive_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Root finder / inverter left its reachable range. Reports the achievable
// interval so callers can reframe the query.
class bracket_error : public numerical_error {
 public:
  bracket_error(const std::string& what, double lo, double hi)
      : numerical_error(what), achievable_lo(lo), achievable_hi(hi) {}
  double achievable_lo;
  double achievable_hi;
};

}  // namespace slowvol
