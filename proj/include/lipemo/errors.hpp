#pragma once

#include <stdexcept>
#include <string>

namespace lipemo {

// Bad caller input: wrong shapes, out-of-range parameters, missing data.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inconsistent configuration or incompatible artifacts (checkpoint/config mismatch).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses, non-convergent matrix functions and similar.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by frame scorers when the frame cannot be normalized or holds no face.
class NoFaceFound : public std::runtime_error {
 public:
  NoFaceFound() : std::runtime_error("no face found") {}
};

}  // namespace lipemo
