#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evpose {

enum class Errc {
  BadMagic,
  TruncatedRecord,
  PolarityOutOfRange,
  UnsortedInput,
  EmptyBoundaries,
  ZeroDuration,
  EventOutOfRaster,
  DegenerateInput,
  NotARotation,
  DimensionMismatch,
  BehindCamera,
  SchemaViolation,
  InvariantViolation,
  NonFiniteObjective,
  LengthMismatch,
  Diverged,
  ShapeMismatch,
  DegenerateConfiguration,
  ZeroHeadBone,
  ConfigError,
  IoError,
};

std::string_view errc_name(Errc code);

/// Exception type thrown by every module; code() identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedRecord: return "TruncatedRecord";
    case Errc::PolarityOutOfRange: return "PolarityOutOfRange";
    case Errc::UnsortedInput: return "UnsortedInput";
    case Errc::EmptyBoundaries: return "EmptyBoundaries";
    case Errc::ZeroDuration: return "ZeroDuration";
    case Errc::EventOutOfRaster: return "EventOutOfRaster";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::NotARotation: return "NotARotation";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::BehindCamera: return "BehindCamera";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::NonFiniteObjective: return "NonFiniteObjective";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::Diverged: return "Diverged";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::ZeroHeadBone: return "ZeroHeadBone";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace evpose
