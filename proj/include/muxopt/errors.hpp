#pragma once

#include <stdexcept>
#include <string>

namespace mux {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A group element lies outside the injectivity chart of the logarithm.
class OutOfChart : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A plant step left the domain where the discrete group step is defined
// (|h M| >= 1). Carries the offending plant and time index when known.
class ChartViolation : public Error {
 public:
  ChartViolation(const std::string& what, int plant = -1, int step = -1)
      : Error(what), plant_(plant), step_(step) {}

  int plant() const noexcept { return plant_; }
  int step() const noexcept { return step_; }

 private:
  int plant_;
  int step_;
};

class SingularMass : public Error {
 public:
  using Error::Error;
};

class ApexOutsideSet : public Error {
 public:
  using Error::Error;
};

class InvalidScenario : public Error {
 public:
  using Error::Error;
};

class NumericalBreakdown : public Error {
 public:
  using Error::Error;
};

// A trajectory or control file is malformed or does not match the scenario.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace mux
