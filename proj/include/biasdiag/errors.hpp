#pragma once

#include <stdexcept>
#include <string>

namespace biasdiag {

// Base of every library error. ValidationError maps to CLI exit code 1,
// RuntimeFailure to exit code 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct RuntimeFailure : Error {
  using Error::Error;
};

// -- validation-time -------------------------------------------------------
struct ShapeMismatch : ValidationError { using ValidationError::ValidationError; };
struct UnknownAttribute : ValidationError { using ValidationError::ValidationError; };
struct DuplicateEdge : ValidationError { using ValidationError::ValidationError; };
struct SelfEdge : ValidationError { using ValidationError::ValidationError; };
struct EmptyLabel : ValidationError { using ValidationError::ValidationError; };
struct BinMismatch : ValidationError { using ValidationError::ValidationError; };
struct RegionOverflow : ValidationError { using ValidationError::ValidationError; };
struct EmptyInput : ValidationError { using ValidationError::ValidationError; };
struct FormatError : ValidationError { using ValidationError::ValidationError; };
struct IoError : ValidationError { using ValidationError::ValidationError; };

// -- failures surfaced while computing -------------------------------------
struct ZeroNorm : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct NoSamples : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct IsolatedAttribute : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct EmptyStratum : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct NonFiniteLoss : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };

}  // namespace biasdiag
