#pragma once

#include <stdexcept>
#include <string>

namespace pcbct {

// Process exit codes used by the CLI; stable so callers can parse them.
enum class ErrorCode : int {
  kParameter = 2,
  kData = 3,
  kState = 4,
  kIo = 5,
};

constexpr const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParameter: return "parameter";
    case ErrorCode::kData: return "data";
    case ErrorCode::kState: return "state";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Invalid argument, shape mismatch, or out-of-range configuration.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorCode::kParameter, what) {}
};

// Input data violates a domain invariant (non-finite pixels, empty dataset, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCode::kData, what) {}
};

// Object is not in a usable state (untrained model, degenerate codebook, ...).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorCode::kState, what) {}
};

// File missing, corrupt, or truncated.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

}  // namespace pcbct
