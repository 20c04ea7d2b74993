#pragma once

#include <stdexcept>
#include <string>

namespace coverage_marl {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: mismatched lengths, out-of-range values, bad masks.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two agents would end up in the same cell after a joint move.
class CollisionError : public Error {
 public:
  using Error::Error;
};

/// The simplex solver gave up (iteration limit) or hit an internal fault.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// The correlated-equilibrium LP could not be solved.
class CeSolveError : public Error {
 public:
  using Error::Error;
};

/// A parameter vector picked up a NaN or infinite entry.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Scenario file problems; the message carries "<path>:<line>: ..." when known.
class ScenarioError : public Error {
 public:
  using Error::Error;
};

}  // namespace coverage_marl
