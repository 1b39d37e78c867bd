#include "gbu/common/error.hpp"

namespace gbu {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension error";
    case ErrorCode::kContract: return "contract error";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kSequenceLength: return "sequence length error";
    case ErrorCode::kLength: return "length error";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kHeadIndex: return "head index out of range";
    case ErrorCode::kGateStatus: return "gate status out of range";
    case ErrorCode::kLabel: return "label out of range";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kLengthInconsistency: return "length inconsistency";
    case ErrorCode::kValueRange: return "value out of range";
    case ErrorCode::kRecordTooShort: return "record too short";
    case ErrorCode::kEmptySubset: return "empty subset";
    case ErrorCode::kUndefinedSimilarity: return "undefined similarity";
    case ErrorCode::kLookup: return "lookup error";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kUnknownGroup: return "unknown group variable";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kHashMismatch: return "hash mismatch";
  }
  return "error";
}

}  // namespace gbu
