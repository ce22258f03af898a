#pragma once

#include <stdexcept>
#include <string>

namespace kids {

// Bad input data or broken/missing artifacts (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure mid-computation, e.g. a NaN loss (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kids
