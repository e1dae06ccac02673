#pragma once

#include <stdexcept>
#include <string>

namespace nnf {

enum class ErrorCode {
  CycleDetected,
  SelfLoop,
  ShapeMismatch,
  UnknownVariant,
  IndexOutOfRange,
  NonFinite,
  EmptyRowMask,
  NotScalar,
  DetachedGraph,
  NonDeterministicFunction,
  LengthMismatch,
  AllTied,
  NonPositiveGroundTruth,
  ParseError,
  ValidationError,
  EmptyDataset,
  EmptyInput,
  DivergedLoss,
  OutOfRange,
  CheckpointMismatch,
  ConfigError,
  IoError,
};

const char* error_code_name(ErrorCode code);

/// Single exception type carrying a machine-checkable code plus a message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace nnf
