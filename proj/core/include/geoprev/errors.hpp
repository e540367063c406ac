#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geoprev {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV, ESRI grid, JSON). Carries the offending row
/// when one is known; rows are 1-based data rows (the header is row 0).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row = 0)
      : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Input that parses but violates a domain invariant.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::size_t row = 0)
      : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Factorization or other linear-algebra failure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A model failed to fit. `detail` keeps a human-readable context such as the
/// last valid parameter vector or the gradient norm at failure.
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace geoprev
