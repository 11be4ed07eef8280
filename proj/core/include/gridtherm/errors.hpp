#pragma once

#include <stdexcept>
#include <string>

namespace gridtherm {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input: bad case file, out-of-range parameter, ill-formed problem.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// The model is valid but the requested operation has no admissible answer:
/// thermal runaway, a policy guard, an infeasible dispatch, an empty search.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

/// An internal consistency check failed; indicates a bug, not bad input.
class InternalError : public Error {
public:
  using Error::Error;
};

} // namespace gridtherm
