#pragma once

#include <stdexcept>
#include <string>

namespace chatcap {

// Base of every error the library throws. The CLI maps the concrete kinds
// below onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// An object was used in the wrong state (consumed tape, out-of-order stream).
class UsageError : public Error {
 public:
  using Error::Error;
};

class InvalidMaskError : public ContractError {
 public:
  using ContractError::ContractError;
};

class BoundsError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Input data could not be read. Subclasses distinguish how.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  AlignmentError(std::size_t dialog_index, const std::string& what)
      : DataError("dialog " + std::to_string(dialog_index) + ": " + what),
        dialog_index_(dialog_index) {}
  std::size_t dialog_index() const noexcept { return dialog_index_; }

 private:
  std::size_t dialog_index_;
};

// Training diverged (NaN/Inf loss) or a numeric self-check failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace chatcap
