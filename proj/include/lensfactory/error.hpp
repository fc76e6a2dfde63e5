#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; `row` is 1-based (header is row 1), 0 if unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t row)
      : Error(row ? "row " + std::to_string(row) + ": " + msg : msg), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& msg, std::size_t row = 0)
      : Error(row ? "row " + std::to_string(row) + ": " + msg : msg), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// The paraxial marginal ray never crosses the axis behind the lens.
class AfocalError : public Error {
 public:
  using Error::Error;
};

class UnreachableFNumber : public Error {
 public:
  using Error::Error;
};

class TooFewRays : public Error {
 public:
  using Error::Error;
};

/// No feasible configuration (optimization or search rejected the candidate).
class Infeasible : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class InvalidTransition : public Error {
 public:
  using Error::Error;
};

}  // namespace lf
