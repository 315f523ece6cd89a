#pragma once

#include <stdexcept>
#include <string>

namespace poe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid numeric or configuration parameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Mesh connectivity violates the manifold triangle-mesh invariants.
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Mismatched sizes between arguments.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The global linear system could not be factored or solved.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Signal or point set too short or empty for the requested operation.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Object used before it holds the state an operation needs.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or was given unusable data.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace poe
