// Copyright 2026 The refseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace refseg {

enum class ErrorCode {
  kCountMismatch,
  kDimensionMismatch,
  kLengthMismatch,
  kEmptySequence,
  kEmptyList,
  kInvalidArgument,
  kShapeError,
  kTokenOutOfRange,
  kNoMaskableTokens,
  kEmptyDataset,
  kNonFiniteLoss,
  kUnknownInstance,
  kDuplicateAnnotator,
  kMixedInstance,
  kRaggedMatrix,
  kEmptyInput,
  kMissingCategorySet,
  kMissingField,
  kParseError,
  kDuplicatePhraseId,
  kMissingFrame,
  kDimensionMismatchAcrossFrames,
  kIoError,
  kConfigError,
  kValidationError,
  kUnknownAnnotator,
  kNotFound,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptySequence: return "EmptySequence";
    case ErrorCode::kEmptyList: return "EmptyList";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kTokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::kNoMaskableTokens: return "NoMaskableTokens";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kUnknownInstance: return "UnknownInstance";
    case ErrorCode::kDuplicateAnnotator: return "DuplicateAnnotator";
    case ErrorCode::kMixedInstance: return "MixedInstance";
    case ErrorCode::kRaggedMatrix: return "RaggedMatrix";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kMissingCategorySet: return "MissingCategorySet";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kDuplicatePhraseId: return "DuplicatePhraseId";
    case ErrorCode::kMissingFrame: return "MissingFrame";
    case ErrorCode::kDimensionMismatchAcrossFrames: return "DimensionMismatchAcrossFrames";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kUnknownAnnotator: return "UnknownAnnotator";
    case ErrorCode::kNotFound: return "NotFound";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace refseg
