#pragma once

#include <stdexcept>
#include <string>

namespace fes {

/// Error categories mapped to CLI exit codes: usage -> 1, data -> 2, numeric -> 3.
enum class ErrorCategory { usage, data, numeric };

class Error : public std::runtime_error {
public:
  Error(ErrorCategory category, std::string message)
      : std::runtime_error(std::move(message)), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

  int exit_code() const noexcept {
    switch (category_) {
    case ErrorCategory::usage: return 1;
    case ErrorCategory::data: return 2;
    case ErrorCategory::numeric: return 3;
    }
    return 3;
  }

private:
  ErrorCategory category_;
};

inline void require(bool condition, ErrorCategory category, const std::string& message) {
  if (!condition) throw Error(category, message);
}

/// Precondition check for caller-supplied arguments.
inline void require_arg(bool condition, const std::string& message) {
  require(condition, ErrorCategory::usage, message);
}

} // namespace fes
