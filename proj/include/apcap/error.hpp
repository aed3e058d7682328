#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace apcap {

enum class ErrorKind {
  InvalidArgument,
  InvalidSchema,
  InvalidConfig,
  NoFaceGroup,
  NoSpineGroup,
  EmptyPose,
  UnknownSlot,
  BadRange,
  StepOutOfRange,
  DimMismatch,
  SchemaMismatch,
  NoLabeledKeypoints,
  RatioViolation,
  UnknownCategory,
  BadBatchSize,
  DuplicateSample,
  ParseError,
  LengthMismatch,
  EmptyGroundTruth,
  MissingImage,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidSchema: return "InvalidSchema";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NoFaceGroup: return "NoFaceGroup";
    case ErrorKind::NoSpineGroup: return "NoSpineGroup";
    case ErrorKind::EmptyPose: return "EmptyPose";
    case ErrorKind::UnknownSlot: return "UnknownSlot";
    case ErrorKind::BadRange: return "BadRange";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::NoLabeledKeypoints: return "NoLabeledKeypoints";
    case ErrorKind::RatioViolation: return "RatioViolation";
    case ErrorKind::UnknownCategory: return "UnknownCategory";
    case ErrorKind::BadBatchSize: return "BadBatchSize";
    case ErrorKind::DuplicateSample: return "DuplicateSample";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorKind::MissingImage: return "MissingImage";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Library-wide exception. `kind()` is the stable, testable part; the message
/// is for humans. `line()` is set for ParseError when the location is known.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::int64_t line = -1)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        line_(line) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::int64_t line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::int64_t line_;
};

}  // namespace apcap
