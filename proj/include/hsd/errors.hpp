#pragma once

#include <stdexcept>
#include <string>

namespace hsd {

enum class ErrorCode {
  InvalidArgument,
  EmptyCorpus,
  DimMismatch,
  ParseError,
  IoError,
  NumericalFault,
  EmptySequence,
  ShapeMismatch,
  GraphState,
  EmptyShingles,
  DuplicateId,
  InsufficientPool,
  Undefined,
};

const char* to_string(ErrorCode code);

/// Every failure the library reports carries one of the codes above so the
/// CLI can map it to a message and a nonzero exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NumericalFault: return "NumericalFault";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::GraphState: return "GraphState";
    case ErrorCode::EmptyShingles: return "EmptyShingles";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InsufficientPool: return "InsufficientPool";
    case ErrorCode::Undefined: return "Undefined";
  }
  return "Unknown";
}

}  // namespace hsd
