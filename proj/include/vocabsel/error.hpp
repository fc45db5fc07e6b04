#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vocabsel {

enum class ErrorKind {
  kInvalidParameter,
  kMissingFile,
  kMalformedFormat,
  kInvalidInput,
};

constexpr std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter: return "invalid_parameter";
    case ErrorKind::kMissingFile: return "missing_file";
    case ErrorKind::kMalformedFormat: return "malformed_format";
    case ErrorKind::kInvalidInput: return "invalid_input";
  }
  return "unknown";
}

/// All library failures are reported through this type. what() is a single
/// line of the form "<kind>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace vocabsel
