#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace charme {

enum class ErrorCode {
  ShapeMismatch,
  DomainError,
  MomentUndefined,
  ModelMismatch,
  InvalidModel,
  NonFiniteLoss,
  SingularBlock,
  SingularCovariance,
  SampleSizeOutOfRange,
  IndexOutOfRange,
  TooManyFailures,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every error raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace charme
