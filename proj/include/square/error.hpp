#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace square {

enum class ErrorCode {
  kIo,
  kRecordInvalid,
  kGoldKindMismatch,
  kSampleTooLarge,
  kContextsForbidden,
  kContextsRequired,
  kInvalidStrategy,
  kTransientBackend,
  kAuth,
  kMalformedResponse,
  kCacheIo,
  kEmptyInput,
  kPrecondition,
  kConfig,
  kLayoutMismatch,
  kRecordFailed,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure raised by the harness carries one of the codes above so
/// callers (and the CLI exit path) can branch on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace square
