#pragma once

#include <source_location>
#include <stdexcept>
#include <string>
#include <string_view>

namespace corgi {

enum class ErrorCode {
  DuplicateEdge,
  IndexOutOfRange,
  LabelOutOfRange,
  UnknownItem,
  DimensionMismatch,
  TooFewEdges,
  EmptyInput,
  DisconnectedGraph,
  ShapeMismatch,
  CacheShapeMismatch,
  SampleTooLarge,
  TooManyEdges,
  DomainError,
  SingleClass,
  NoApplicableEdges,
  ParseError,
  UnknownKey,
  MissingRequired,
  IoError,
  FormatVersionMismatch,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewEdges: return "TooFewEdges";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CacheShapeMismatch: return "CacheShapeMismatch";
    case ErrorCode::SampleTooLarge: return "SampleTooLarge";
    case ErrorCode::TooManyEdges: return "TooManyEdges";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoApplicableEdges: return "NoApplicableEdges";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingRequired: return "MissingRequired";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Every failure raised by the library. `what()` is a single line of the
/// form `<Code>: <message> (<file>:<line>)`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::source_location where = std::source_location::current())
      : std::runtime_error(format(code, message, where)),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            const std::source_location& where) {
    std::string file = where.file_name();
    if (auto slash = file.find_last_of('/'); slash != std::string::npos) {
      file = file.substr(slash + 1);
    }
    std::string out(to_string(code));
    out += ": ";
    out += message;
    out += " (" + file + ":" + std::to_string(where.line()) + ")";
    return out;
  }

  ErrorCode code_;
  std::string message_;
};

}  // namespace corgi
