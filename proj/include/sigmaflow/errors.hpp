#pragma once

#include <stdexcept>
#include <string>

namespace sigmaflow {

// Base class for every error thrown by this library. Catching sigmaflow::Error
// is enough to intercept anything that is not a plain logic bug.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// (H1,H2) vanished where a bang feedback was required.
struct OnSwitchingLocus : Error {
  using Error::Error;
};

// |H12| too small to define the singular feedback.
struct SingularControlUndefined : Error {
  using Error::Error;
};

// det(F1,F2,F01,F02) below threshold: the bracket frame does not span R^4.
struct FrameRankDeficient : Error {
  using Error::Error;
};

struct AdjointVanishes : Error {
  using Error::Error;
};

// |c| below threshold where the quadratic-contact analysis needs c != 0.
struct GenericityViolated : Error {
  using Error::Error;
};

struct DegenerateParameter : Error {
  using Error::Error;
};

struct StepSizeUnderflow : Error {
  using Error::Error;
};

struct TolerancesUnachievable : Error {
  using Error::Error;
};

struct NotInNeighborhood : Error {
  using Error::Error;
};

struct NoContact : Error {
  using Error::Error;
};

struct NoRootInBracket : Error {
  using Error::Error;
};

struct ShootingFailed : Error {
  using Error::Error;
};

struct InconclusiveClassification : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DegreeCapExceeded : Error {
  using Error::Error;
};

}  // namespace sigmaflow
