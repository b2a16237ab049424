#include "cxr/error.hpp"

namespace cxr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kMissingManifest: return "missing manifest";
    case ErrorCode::kUnknownFormatVersion: return "unknown format version";
    case ErrorCode::kMissingBlob: return "missing blob";
    case ErrorCode::kTruncatedBlob: return "truncated blob";
    case ErrorCode::kNonFiniteValue: return "non-finite value";
    case ErrorCode::kMalformedManifest: return "malformed manifest";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kDecode: return "decode error";
    case ErrorCode::kValidation: return "validation failed";
    case ErrorCode::kEmptyClass: return "empty class";
    case ErrorCode::kEmptyDataset: return "empty dataset";
    case ErrorCode::kNumerical: return "numerical failure";
  }
  return "unknown error";
}

}  // namespace cxr
