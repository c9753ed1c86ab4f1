#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ppimt {

enum class Errc {
  LengthMismatch,
  MissingLabel,
  NonFiniteValue,
  TooSmall,
  DuplicateTaskId,
  SizeOutOfRange,
  BadK,
  NonPositiveWeight,
  EmptyFit,
  NoAuxiliaryLabels,
  BadSampleSize,
  DegenerateSurrogate,
  DegenerateOutcome,
  TooLargeToEnumerate,
  EmptyLabeledSet,
  TooFewLabels,
  BadProbability,
  BadDof,
  TooFewResiduals,
  BadAlpha,
  ResidualMismatch,
  BadSpec,
  ParseError,
  SchemaViolation,
  ConfigInvalid,
  IoError,
};

constexpr std::string_view errc_name(Errc e) noexcept {
  switch (e) {
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::MissingLabel: return "MissingLabel";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::TooSmall: return "TooSmall";
    case Errc::DuplicateTaskId: return "DuplicateTaskId";
    case Errc::SizeOutOfRange: return "SizeOutOfRange";
    case Errc::BadK: return "BadK";
    case Errc::NonPositiveWeight: return "NonPositiveWeight";
    case Errc::EmptyFit: return "EmptyFit";
    case Errc::NoAuxiliaryLabels: return "NoAuxiliaryLabels";
    case Errc::BadSampleSize: return "BadSampleSize";
    case Errc::DegenerateSurrogate: return "DegenerateSurrogate";
    case Errc::DegenerateOutcome: return "DegenerateOutcome";
    case Errc::TooLargeToEnumerate: return "TooLargeToEnumerate";
    case Errc::EmptyLabeledSet: return "EmptyLabeledSet";
    case Errc::TooFewLabels: return "TooFewLabels";
    case Errc::BadProbability: return "BadProbability";
    case Errc::BadDof: return "BadDof";
    case Errc::TooFewResiduals: return "TooFewResiduals";
    case Errc::BadAlpha: return "BadAlpha";
    case Errc::ResidualMismatch: return "ResidualMismatch";
    case Errc::BadSpec: return "BadSpec";
    case Errc::ParseError: return "ParseError";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a machine
/// readable kind; the message is prefixed with the kind name.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

namespace detail {
[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }
}  // namespace detail

}  // namespace ppimt
