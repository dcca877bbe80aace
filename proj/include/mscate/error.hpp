#pragma once

#include <stdexcept>
#include <string>

namespace mscate {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Config,
  MalformedHeader,
  SizeMismatch,
  NonFiniteValue,
  DuplicateId,
  NonBinaryTreatment,
  UnparsableRow,
  DimMismatch,
  UnknownUnitId,
  OutOfBounds,
  NoValidCenter,
  MaskTooLarge,
  MissingEmbedding,
  ScaleTagMismatch,
  NoPairs,
  SingleArm,
  TooFewUnits,
  BlocksDontCover,
  UnknownFlagCombination,
  NonFiniteLoss,
  RequiresRawRepresentations,
  Numerical,
};

// Process exit status buckets used by the CLI.
enum class ErrorCategory { Usage = 1, Data = 2, Numerical = 3 };

const char* to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace mscate
