#pragma once

#include <stdexcept>
#include <string>

namespace shiftel {

//! Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Invalid user configuration (dimensions, counts, option values).
class ConfigError : public Error
{
public:
  using Error::Error;
};

//! Argument outside the mathematical domain of a function.
class DomainError : public Error
{
public:
  using Error::Error;
};

//! Malformed input file. Carries the 1-based data row when known.
class ParseError : public Error
{
public:
  ParseError(const std::string& what, long row = -1)
    : Error(what), row_(row)
  {}
  long row() const { return row_; }

private:
  long row_;
};

//! Non-finite values, singular systems, failed numerical procedures.
class NumericError : public Error
{
public:
  using Error::Error;
};

//! Matrix or vector dimensions do not agree.
class ShapeError : public Error
{
public:
  using Error::Error;
};

//! Zero is not in the interior of the convex hull of the moment rows.
class ConvexHullViolation : public Error
{
public:
  using Error::Error;
};

//! Outer parameter search failed (e.g. no feasible point on the grid).
class EstimationError : public Error
{
public:
  using Error::Error;
};

//! Confidence-interval construction failed.
class InferenceError : public Error
{
public:
  using Error::Error;
};

//! The caller requested an operation the result type does not support.
class ContractError : public Error
{
public:
  using Error::Error;
};

} // namespace shiftel
