#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace posefuse {

enum class ErrorKind {
  InvalidArgument,
  DegenerateRay,
  InvalidScale,
  InvalidRange,
  InvalidConfig,
  EmptyModel,
  EmptyCode,
  EmptyInput,
  EmptyHypothesisSet,
  TableMismatch,
  InvalidShape,
  Parse,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateRay: return "DegenerateRay";
    case ErrorKind::InvalidScale: return "InvalidScale";
    case ErrorKind::InvalidRange: return "InvalidRange";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyModel: return "EmptyModel";
    case ErrorKind::EmptyCode: return "EmptyCode";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyHypothesisSet: return "EmptyHypothesisSet";
    case ErrorKind::TableMismatch: return "TableMismatch";
    case ErrorKind::InvalidShape: return "InvalidShape";
    case ErrorKind::Parse: return "Parse";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers what failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace posefuse
