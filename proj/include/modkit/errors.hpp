#pragma once

#include <stdexcept>
#include <string>

namespace modkit {

/// Base class for all toolkit errors. Subclasses map 1:1 onto the
/// error conditions named in the public contracts.
struct ModError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfBounds : ModError {
  using ModError::ModError;
};
struct SpecMismatch : ModError {
  using ModError::ModError;
};
struct ShapeMismatch : ModError {
  using ModError::ModError;
};
struct TooSmall : ModError {
  using ModError::ModError;
};
struct EmptyMask : ModError {
  using ModError::ModError;
};
struct ZeroMass : ModError {
  using ModError::ModError;
};
struct NoOverlap : ModError {
  using ModError::ModError;
};
struct TimeOutOfRange : ModError {
  using ModError::ModError;
};
struct EmptyDataset : ModError {
  using ModError::ModError;
};
struct InsufficientData : ModError {
  using ModError::ModError;
};

/// Configuration / input validation failure. `field` is the JSON-ish path
/// of the offending entry, e.g. "agents[0].speed".
struct ConfigError : ModError {
  ConfigError(const std::string& field_path, const std::string& message)
      : ModError(field_path + ": " + message), field(field_path) {}
  std::string field;
};

struct IoError : ModError {
  using ModError::ModError;
};

}  // namespace modkit
