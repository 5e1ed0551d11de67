#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace noisyot {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operands whose sizes do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

/// A cost/base pair whose kernel rows are not probability vectors.
class InvalidChannelError : public Error {
public:
  InvalidChannelError(std::size_t row, const std::string& what)
      : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

/// No transport plan with finite cost, or an empty ambiguity set.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

/// Experiment configuration rejected before any computation ran.
class ValidationError : public Error {
public:
  using Error::Error;
};

}  // namespace noisyot
