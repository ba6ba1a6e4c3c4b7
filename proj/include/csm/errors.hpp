#pragma once

#include <stdexcept>
#include <string>

namespace csm {

// Invalid configuration or malformed user input. The CLI maps this to exit 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Contract violation between components (shape mismatch, non-scalar loss, ...).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value detected in a numeric path. Message names the operation.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MalformedHeaderError : IoError {
  explicit MalformedHeaderError(const std::string& msg) : IoError(msg) {}
};

struct TruncatedPayloadError : IoError {
  explicit TruncatedPayloadError(const std::string& msg) : IoError(msg) {}
};

struct PayloadSizeMismatchError : IoError {
  explicit PayloadSizeMismatchError(const std::string& msg) : IoError(msg) {}
};

}  // namespace csm
