// Copyright 2026 The bvv Authors.
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

namespace bvv {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kParse,
  kEmptyInput,
  kCapacity,
  kDuplicate,
  kUnpairedSurrogate,
  kUncoveredCharacter,
  kOutOfRange,
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kCorrupt,
  kTrailingData,
  kShapeMismatch,
  kNonFinite,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kCapacity: return "capacity";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kUnpairedSurrogate: return "unpaired_surrogate";
    case ErrorCode::kUncoveredCharacter: return "uncovered_character";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported_version";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kCorrupt: return "corrupt";
    case ErrorCode::kTrailingData: return "trailing_data";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
  }
  return "unknown";
}

/// Exception carrying a machine-checkable code. Every failure the library
/// reports goes through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bvv
