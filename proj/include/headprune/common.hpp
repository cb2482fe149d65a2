#pragma once

#include <stdexcept>
#include <string>

namespace headprune {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Error taxonomy maps onto CLI exit codes: validation 2, missing artifact 3,
// numeric failure 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};

struct MissingArtifactError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

}  // namespace headprune
