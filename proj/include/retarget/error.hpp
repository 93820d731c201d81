#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace retarget {

/// Coarse classification of failures. The CLI maps each kind to its own exit
/// code and prints the kind as a machine-parsable tag.
enum class ErrorKind {
  kInvalidInput,  // malformed data or configuration values
  kParse,         // unreadable file contents
  kPrecondition,  // input is well-formed but violates an operation's contract
  kNumerical,     // singular systems and similar solver failures
  kIo,            // missing or unwritable files
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid_input";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Same error with `context` prepended to the message.
  Error annotated(std::string_view context) const {
    return Error(kind_, std::string(context) + ": " + what());
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace retarget
