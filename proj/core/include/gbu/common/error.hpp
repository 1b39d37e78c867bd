#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gbu {

/// Failure categories surfaced by the library. The CLI maps these onto exit codes.
enum class ErrorCode {
  kDimension,        // tensor shape / channel mismatch
  kContract,         // API misuse (non-scalar backward, bad argument)
  kEmptyInput,
  kSequenceLength,   // attention input longer than the position table
  kLength,           // temporal length not compatible with the stride product
  kConfig,
  kHeadIndex,
  kGateStatus,
  kLabel,
  kBadMagic,
  kTruncated,
  kLengthInconsistency,
  kValueRange,
  kRecordTooShort,
  kEmptySubset,
  kUndefinedSimilarity,
  kLookup,
  kNonFinite,
  kUnknownGroup,
  kIo,
  kHashMismatch,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace gbu
