#pragma once

#include <stdexcept>
#include <string>

namespace dmpopt {

// Bad input: malformed files, out-of-range parameters, infeasible problems.
// The CLI maps these to exit status 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Something went wrong during a numeric sweep (non-finite values, messages
// leaving [0,1] beyond round-off). Indicates a bug or an unsupported regime.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation ran past its wall-clock cap.
class TimeoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dmpopt
