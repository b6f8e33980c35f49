#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace riskexplain {

enum class ErrorCode {
  kParse,
  kValidation,
  kSchemaMismatch,
  kUnknownOutcome,
  kUnknownFeature,
  kPrecondition,
  kDegenerateLabels,
  kChecksum,
  kVersion,
  kIo,
  kNotFound,
  kGuard,
  kInternal,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library. `field` names the offending input
// (feature, column, JSON path) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace riskexplain
