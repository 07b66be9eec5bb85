#pragma once

#include <stdexcept>
#include <string>

namespace mksr {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorClass {
  Usage,      // bad arguments or configuration
  Data,       // malformed or inadmissible input data
  Numerical,  // an algorithm could not produce a valid result
};

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonFiniteInput,
  AsymmetricInput,
  AllZeroDistances,
  NegativeWeight,
  ZeroTrace,
  NotPositiveSemidefinite,
  DegenerateAtom,
  FingerprintMismatch,
  ClassTooSmall,
  SingularDenominator,
  Infeasible,
  SingularSystem,
  LengthMismatch,
  DisconnectedDegenerate,
  CorruptContainer,
  IoError,
  ConfigError,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::AsymmetricInput: return "AsymmetricInput";
    case ErrorCode::AllZeroDistances: return "AllZeroDistances";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::ZeroTrace: return "ZeroTrace";
    case ErrorCode::NotPositiveSemidefinite: return "NotPositiveSemidefinite";
    case ErrorCode::DegenerateAtom: return "DegenerateAtom";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::SingularDenominator: return "SingularDenominator";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DisconnectedDegenerate: return "DisconnectedDegenerate";
    case ErrorCode::CorruptContainer: return "CorruptContainer";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

inline ErrorClass error_class(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ConfigError:
      return ErrorClass::Usage;
    case ErrorCode::DegenerateAtom:
    case ErrorCode::SingularDenominator:
    case ErrorCode::Infeasible:
    case ErrorCode::SingularSystem:
    case ErrorCode::DisconnectedDegenerate:
      return ErrorClass::Numerical;
    default:
      return ErrorClass::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return mksr::error_class(code_); }

 private:
  ErrorCode code_;
};

}  // namespace mksr
