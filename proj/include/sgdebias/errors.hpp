#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgdebias {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the inputs of an operation was violated.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed or fails validation.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Input data error tied to a specific (1-based, data-row) row number.
class RowError : public DataError {
 public:
  RowError(const std::string& kind, std::size_t row, const std::string& detail)
      : DataError(kind + " at row " + std::to_string(row) + ": " + detail), row_(row) {}
  [[nodiscard]] std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class MalformedRow : public RowError {
 public:
  MalformedRow(std::size_t row, const std::string& detail) : RowError("MalformedRow", row, detail) {}
};

class NonBinaryOutcome : public RowError {
 public:
  NonBinaryOutcome(std::size_t row, const std::string& detail)
      : RowError("NonBinaryOutcome", row, detail) {}
};

class UnknownColumn : public DataError {
 public:
  explicit UnknownColumn(const std::string& name) : DataError("UnknownColumn: " + name) {}
};

class EmptyFile : public DataError {
 public:
  EmptyFile() : DataError("EmptyFile: no header or no data rows") {}
};

/// Numerical failure somewhere in the fitting pipeline.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SeparationDetected : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularHessian : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Newton refit on a split ran out of iterations.
class RefitNonConvergence : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

class TooManyDiscardedSplits : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FoldFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ReplicateFailures : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace sgdebias
