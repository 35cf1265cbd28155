#pragma once

#include <stdexcept>
#include <string>

namespace edpci {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `row()` is the 1-based data row (0 for the header).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int row) : Error(what), row_(row) {}
  int row() const noexcept { return row_; }

 private:
  int row_;
};

/// A value violates a schema or configuration invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A continuous column has zero variance over its observed entries.
class DegenerateColumnError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or underflowing quantity inside a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// IRLS / Newton iteration did not converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Conditioning event has zero mass under every cluster.
class PositivityError : public Error {
 public:
  using Error::Error;
};

}  // namespace edpci
