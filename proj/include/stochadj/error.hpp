#pragma once

#include <stdexcept>
#include <string>

namespace stochadj {

// Bad input: wrong dimensions, out-of-range settings, malformed configs.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite value or otherwise could not proceed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stochadj
