#pragma once

#include <stdexcept>
#include <string>

namespace clreg {

// Bad shapes, empty batches, invalid hyperparameters.
struct invalid_input : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Config files that fail validation (CLI exit code 2).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses, degenerate variances, undefined statistics
// (CLI exit code 3).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace clreg
