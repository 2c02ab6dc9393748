#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dilhyfs {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Problems with the data itself (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

class LabelError : public DataError {
 public:
  using DataError::DataError;
};

class GenerationError : public DataError {
 public:
  using DataError::DataError;
};

class CompositionError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : DataError(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Numerical failures (CLI exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

class FactorizationError : public NumericError {
 public:
  FactorizationError(std::size_t pivot, double value)
      : NumericError("cholesky: non-positive pivot " + std::to_string(value) + " at index " +
                     std::to_string(pivot) + " (matrix not positive definite)"),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

}  // namespace dilhyfs
