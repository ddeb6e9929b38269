#pragma once

#include <stdexcept>
#include <string>

namespace mscan {

enum class ErrorCode {
  MissingFile,
  IoError,
  BadManifest,
  ShapeMismatch,
  BadGeometry,
  MissingLevel,
  NotEnoughSlices,
  EmptySeries,
  EmptyDataset,
  TooFewStudies,
  SingleClass,
  BadLabel,
  BadShape,
  BadConfig,
  MissingPriorStage,
  UnknownStudy,
};

// Data errors come from bad inputs on disk; pipeline errors from misuse of
// in-process contracts (shape mismatches, missing prior stages, ...).
enum class ErrorKind { Data, Pipeline };

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

  ErrorKind kind() const {
    switch (code_) {
      case ErrorCode::BadShape:
      case ErrorCode::SingleClass:
      case ErrorCode::MissingPriorStage:
        return ErrorKind::Pipeline;
      default:
        return ErrorKind::Data;
    }
  }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadManifest: return "BadManifest";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadGeometry: return "BadGeometry";
    case ErrorCode::MissingLevel: return "MissingLevel";
    case ErrorCode::NotEnoughSlices: return "NotEnoughSlices";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::TooFewStudies: return "TooFewStudies";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::BadShape: return "BadShape";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::MissingPriorStage: return "MissingPriorStage";
    case ErrorCode::UnknownStudy: return "UnknownStudy";
  }
  return "Unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(error_code_name(code)) + ": " + what);
}

}  // namespace mscan
