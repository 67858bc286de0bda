#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zebrod {

enum class ErrorCode {
  // labelio
  MalformedLine,
  RangeViolation,
  InvalidBox,
  NonPositiveImageSize,
  // geometry
  InvalidSpec,
  EmptyCrop,
  // augment
  MissingAnnotation,
  IoFailure,
  InvalidConfig,
  // embedspace / vindex
  ZeroVector,
  DimMismatch,
  EmptyList,
  InvalidPayload,
  VersionMismatch,
  ChecksumMismatch,
  BadFormat,
  // registry
  DuplicateSku,
  EmptyReferences,
  UnknownSku,
  UnknownFlagId,
  FlagNotOpen,
  // pipeline
  DetectorFailure,
  ProviderFailure,
  Unreachable,
  MalformedResponse,
  Timeout,
  // evalkit
  NoClasses,
  // service
  BadRequest,
  Unauthorized,
  NotFound,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Annotation parse failures carry the 1-based line number they refer to.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, std::size_t line, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace zebrod
