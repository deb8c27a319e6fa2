#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdm {

enum class ErrorCode {
  kNonDivisibleLength,
  kEmptyGeneration,
  kBlockOutOfRange,
  kPositionNotMasked,
  kPositionOutsideBlock,
  kInvalidToken,
  kEmptyBlock,
  kPredictorUnavailable,
  kEmptyCorpus,
  kMalformedResponse,
  kIdMismatch,
  kIncompleteCoverage,
  kProtocolMismatch,
  kEmptySample,
  kMissingBlock,
  kMissingStep,
  kInvalidPolicy,
  kInvalidProfile,
  kEmptyRecords,
  kLengthMismatch,
  kZeroVector,
  kIncompleteTrace,
  kParseError,
  kDuplicateId,
  kArityMismatch,
  kInvalidGrid,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Every failure in the engine surfaces as this exception; callers branch on
// code() rather than on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mdm
