#pragma once

#include <stdexcept>
#include <string>

namespace robustkit {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or data shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation (log of x <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A precondition stated by the API was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value. field() names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Binary file problems. Subclasses separate the failure kinds so callers
// can tell a wrong file from a damaged one.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncatedFileError : public FormatError {
 public:
  TruncatedFileError(const std::string& what, std::size_t expected, std::size_t actual)
      : FormatError(what + ": expected " + std::to_string(expected) + " bytes, got " +
                    std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected_bytes() const noexcept { return expected_; }
  std::size_t actual_bytes() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class ShapeTableError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace robustkit
