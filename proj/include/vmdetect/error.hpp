#pragma once

#include <stdexcept>
#include <string>

namespace vmdetect {

// Each category maps onto a CLI exit code (see tools/vmdetect.cpp).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class SolverError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace vmdetect
