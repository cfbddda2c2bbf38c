#pragma once

#include <stdexcept>
#include <string>

namespace vitforge {

// Bad user input: malformed documents, out-of-range fields, impossible budgets.
// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during an evaluation: non-finite values, singular NTK,
// degenerate tangent vectors. The CLI maps this to exit code 3.
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vitforge
