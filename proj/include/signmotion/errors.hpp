#pragma once

#include <stdexcept>
#include <string>

namespace signmotion {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or index contract violations.
struct DimensionError : Error {
  using Error::Error;
};

// Malformed or unsupported file content.
struct FormatError : Error {
  using Error::Error;
};

// Inputs that make the requested computation meaningless
// (all-zero confidences, empty text, empty sequence sets).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Point at or behind the camera plane.
struct BehindCameraError : Error {
  using Error::Error;
};

// Non-finite loss during an optimization; message names the iteration.
struct DivergenceError : Error {
  using Error::Error;
};

// Non-finite network prediction during training.
struct TrainingInstabilityError : Error {
  using Error::Error;
};

// Remote embedding service could not be reached and no cache entry exists.
struct UnavailableError : Error {
  using Error::Error;
};

// Remote embedding service answered with an unexpected payload.
struct ProtocolError : Error {
  using Error::Error;
};

}  // namespace signmotion
