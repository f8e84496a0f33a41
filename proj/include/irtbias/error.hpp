#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace irtbias {

enum class ErrorCode {
  ParseError,
  ValidationError,
  InvalidCategory,
  EmptyData,
  UnknownItem,
  DuplicateCell,
  EmptyGroup,
  EndpointUnreachable,
  UnparseableLabel,
  EmptyText,
  AllMissing,
  InvalidGridSpec,
  InsufficientData,
  DegenerateMatrix,
  UndefinedFit,
  SingularInformation,
  ScaleMismatch,
  InsufficientGroupData,
  InvalidSpec,
  Stage2Skipped,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for every data-level failure. Callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace irtbias
