#pragma once

#include <stdexcept>
#include <string>

namespace rif {

/// Base class for all recoverable errors raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// IMU ingestion / preintegration
struct EmptyStreamError : Error {
  using Error::Error;
};
struct NonMonotonicTimeError : Error {
  using Error::Error;
};
struct SaturatedSampleError : Error {
  using Error::Error;
};
struct NonPositiveDtError : Error {
  using Error::Error;
};

// Ranging
struct DegenerateRangeError : Error {
  using Error::Error;
};
struct NoCrossingError : Error {
  using Error::Error;
};

// Graph / values
struct MissingVariableError : Error {
  using Error::Error;
};
struct UnknownKeyError : Error {
  using Error::Error;
};

// Solvers
struct LambdaOverflowError : Error {
  using Error::Error;
};
struct SingularSystemError : Error {
  using Error::Error;
};
struct MissingInitializationError : Error {
  using Error::Error;
};
struct NoSolvedStateError : Error {
  using Error::Error;
};

// Initialization
struct InsufficientAnchorsError : Error {
  using Error::Error;
};
struct InsufficientImuError : Error {
  using Error::Error;
};

// Evaluation
struct NoMatchesError : Error {
  using Error::Error;
};

// File ingestion
struct ParseError : Error {
  using Error::Error;
};

}  // namespace rif
