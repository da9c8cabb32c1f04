#pragma once

#include <stdexcept>
#include <string>

namespace hermflow {

enum class ErrorKind {
  DegreeMismatch,
  DegreeOutOfRange,
  DimensionMismatch,
  NotOrthogonal,
  NotOrthonormal,
  NotUnit,
  NormTooLarge,
  DegreeCapExceeded,
  ZeroFunction,
  UnsupportedTargetKind,
  OddDegreeWithReflection,
  InfeasibleN,
  OutOfDomain,
  StepRejected,
  NonFiniteState,
  TooFewPoints,
  BlowUp,
  DegreeExceedsSpectrum,
  UnknownScenario,
  ParseError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DegreeMismatch: return "DegreeMismatch";
    case ErrorKind::DegreeOutOfRange: return "DegreeOutOfRange";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotOrthogonal: return "NotOrthogonal";
    case ErrorKind::NotOrthonormal: return "NotOrthonormal";
    case ErrorKind::NotUnit: return "NotUnit";
    case ErrorKind::NormTooLarge: return "NormTooLarge";
    case ErrorKind::DegreeCapExceeded: return "DegreeCapExceeded";
    case ErrorKind::ZeroFunction: return "ZeroFunction";
    case ErrorKind::UnsupportedTargetKind: return "UnsupportedTargetKind";
    case ErrorKind::OddDegreeWithReflection: return "OddDegreeWithReflection";
    case ErrorKind::InfeasibleN: return "InfeasibleN";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::StepRejected: return "StepRejected";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::DegreeExceedsSpectrum: return "DegreeExceedsSpectrum";
    case ErrorKind::UnknownScenario: return "UnknownScenario";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hermflow
