#pragma once

#include <stdexcept>
#include <string>

namespace fracctl {

// Base class for all library failures. Invalid arguments are reported with
// std::invalid_argument; everything a solver can run into at runtime derives
// from Error so the CLI can map it to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A per-step fixed point would not contract; the step size must shrink.
class ContractionFailure : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Argument outside the range where a routine is accurate.
class RangeError : public Error {
 public:
  using Error::Error;
};

class ProjectionFailure : public Error {
 public:
  using Error::Error;
};

class LineSearchFailure : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fracctl
