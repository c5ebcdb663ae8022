#include "square/error.hpp"

namespace square {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "io-error";
    case ErrorCode::kRecordInvalid: return "record-invalid";
    case ErrorCode::kGoldKindMismatch: return "gold-kind-mismatch";
    case ErrorCode::kSampleTooLarge: return "sample-too-large";
    case ErrorCode::kContextsForbidden: return "contexts-forbidden";
    case ErrorCode::kContextsRequired: return "contexts-required";
    case ErrorCode::kInvalidStrategy: return "invalid-strategy";
    case ErrorCode::kTransientBackend: return "transient-backend-error";
    case ErrorCode::kAuth: return "auth-error";
    case ErrorCode::kMalformedResponse: return "malformed-response";
    case ErrorCode::kCacheIo: return "cache-io-error";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kConfig: return "config-error";
    case ErrorCode::kLayoutMismatch: return "layout-mismatch";
    case ErrorCode::kRecordFailed: return "record-failed";
  }
  return "unknown";
}

}  // namespace square
