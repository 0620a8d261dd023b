#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uap {

enum class ErrorCode {
  NotFound,
  UnsupportedFormat,
  CorruptFile,
  IoError,
  MissingAudio,
  InvalidTranscript,
  MalformedManifest,
  InvalidConfig,
  TooShort,
  ShapeMismatch,
  InfeasibleTarget,
  TooLargeForOracle,
  EmptyCorpus,
  DivergedTraining,
  EmptyOriginal,
  SilentSignal,
  AllTranscriptsEmpty,
  GradientNonFinite,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingAudio: return "MissingAudio";
    case ErrorCode::InvalidTranscript: return "InvalidTranscript";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InfeasibleTarget: return "InfeasibleTarget";
    case ErrorCode::TooLargeForOracle: return "TooLargeForOracle";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::EmptyOriginal: return "EmptyOriginal";
    case ErrorCode::SilentSignal: return "SilentSignal";
    case ErrorCode::AllTranscriptsEmpty: return "AllTranscriptsEmpty";
    case ErrorCode::GradientNonFinite: return "GradientNonFinite";
  }
  return "Unknown";
}

// All library failures surface as this exception; code() is stable and
// machine-readable, what() carries the human detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace uap
