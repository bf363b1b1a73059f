#pragma once

#include <stdexcept>
#include <string>

namespace hiaer {

/// Base exception for the project. `code()` is a stable machine-readable tag
/// (e.g. "malformed_frame"); `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Configuration or data-file problem detected at load/startup time.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

class NumericFaultError : public Error {
 public:
  explicit NumericFaultError(const std::string& message) : Error("numeric_fault", message) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& message) : Error("empty_input", message) {}
};

}  // namespace hiaer
