#include "mdm/error.hpp"

namespace mdm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonDivisibleLength: return "NON_DIVISIBLE_LENGTH";
    case ErrorCode::kEmptyGeneration: return "EMPTY_GENERATION";
    case ErrorCode::kBlockOutOfRange: return "BLOCK_OUT_OF_RANGE";
    case ErrorCode::kPositionNotMasked: return "POSITION_NOT_MASKED";
    case ErrorCode::kPositionOutsideBlock: return "POSITION_OUTSIDE_BLOCK";
    case ErrorCode::kInvalidToken: return "INVALID_TOKEN";
    case ErrorCode::kEmptyBlock: return "EMPTY_BLOCK";
    case ErrorCode::kPredictorUnavailable: return "PREDICTOR_UNAVAILABLE";
    case ErrorCode::kEmptyCorpus: return "EMPTY_CORPUS";
    case ErrorCode::kMalformedResponse: return "MALFORMED_RESPONSE";
    case ErrorCode::kIdMismatch: return "ID_MISMATCH";
    case ErrorCode::kIncompleteCoverage: return "INCOMPLETE_COVERAGE";
    case ErrorCode::kProtocolMismatch: return "PROTOCOL_MISMATCH";
    case ErrorCode::kEmptySample: return "EMPTY_SAMPLE";
    case ErrorCode::kMissingBlock: return "MISSING_BLOCK";
    case ErrorCode::kMissingStep: return "MISSING_STEP";
    case ErrorCode::kInvalidPolicy: return "INVALID_POLICY";
    case ErrorCode::kInvalidProfile: return "INVALID_PROFILE";
    case ErrorCode::kEmptyRecords: return "EMPTY_RECORDS";
    case ErrorCode::kLengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::kZeroVector: return "ZERO_VECTOR";
    case ErrorCode::kIncompleteTrace: return "INCOMPLETE_TRACE";
    case ErrorCode::kParseError: return "PARSE_ERROR";
    case ErrorCode::kDuplicateId: return "DUPLICATE_ID";
    case ErrorCode::kArityMismatch: return "ARITY_MISMATCH";
    case ErrorCode::kInvalidGrid: return "INVALID_GRID";
    case ErrorCode::kIo: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace mdm
