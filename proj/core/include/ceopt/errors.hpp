#pragma once

#include <stdexcept>
#include <string>

namespace ceopt {

// Base class for all library errors. Subclasses distinguish caller bugs
// (bad graphs, bad queries) from numerical trouble so tests and the CLI
// can react per category.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidGraph : Error {
  using Error::Error;
};

struct UnknownNode : Error {
  using Error::Error;
};

struct InvalidIntervention : Error {
  using Error::Error;
};

struct InvalidData : Error {
  using Error::Error;
};

struct InvalidQuery : Error {
  using Error::Error;
};

struct FitFailed : Error {
  using Error::Error;
};

// Covariance factorization failed even after jitter escalation.
struct NumericalFailure : Error {
  using Error::Error;
};

struct UnknownBenchmark : Error {
  using Error::Error;
};

struct ScoreFailure : Error {
  using Error::Error;
};

struct InternalError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace ceopt
