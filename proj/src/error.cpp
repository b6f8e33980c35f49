#include "riskexplain/error.hpp"

namespace riskexplain {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kValidation: return "validation_error";
    case ErrorCode::kSchemaMismatch: return "schema_mismatch";
    case ErrorCode::kUnknownOutcome: return "unknown_outcome";
    case ErrorCode::kUnknownFeature: return "unknown_feature";
    case ErrorCode::kPrecondition: return "precondition_failed";
    case ErrorCode::kDegenerateLabels: return "degenerate_labels";
    case ErrorCode::kChecksum: return "checksum_mismatch";
    case ErrorCode::kVersion: return "unsupported_version";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kGuard: return "guard_exceeded";
    case ErrorCode::kInternal: return "internal_error";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::string field)
    : std::runtime_error(message), code_(code), field_(std::move(field)) {}

}  // namespace riskexplain
