#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace canopy {

/// Failure categories raised across the library. Every public operation
/// reports failure by throwing canopy::Error carrying one of these.
enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  InvalidBounds,
  WindowOutOfBounds,
  ResampleDirectionError,
  InvalidFactor,
  InvalidPolygon,
  GridMismatch,
  EmptySeries,
  MissingBand,
  EmptyPopulation,
  InvalidFraction,
  ShapeError,
  CheckpointMismatch,
  CorruptCheckpoint,
  NoLabels,
  SkipBatch,
  NonFiniteGradient,
  NoData,
  EmptyEvaluation,
  EmptyCloud,
  EmptyConstraints,
  ParseError,
  IoError,
  MissingDependency,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::WindowOutOfBounds: return "WindowOutOfBounds";
    case ErrorCode::ResampleDirectionError: return "ResampleDirectionError";
    case ErrorCode::InvalidFactor: return "InvalidFactor";
    case ErrorCode::InvalidPolygon: return "InvalidPolygon";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::MissingBand: return "MissingBand";
    case ErrorCode::EmptyPopulation: return "EmptyPopulation";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::NoLabels: return "NoLabels";
    case ErrorCode::SkipBatch: return "SkipBatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::EmptyConstraints: return "EmptyConstraints";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingDependency: return "MissingDependency";
  }
  return "Unknown";
}

}  // namespace canopy
