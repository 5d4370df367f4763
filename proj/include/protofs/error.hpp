/* Copyright 2026 The protofs Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PROTOFS_ERROR_HPP_
#define PROTOFS_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace protofs {

enum class ErrorCode {
  kIo,
  kMissingFile,
  kBadMagic,
  kTruncated,
  kNonFinite,
  kBadManifest,
  kDimMismatch,
  kLabelOutOfRange,
  kEmptyClass,
  kNotEnoughShots,
  kZeroNormRow,
  kShapeMismatch,
  kNotScalarLoss,
  kDetachedTensor,
  kDimNotSquare,
  kNonFiniteLoss,
  kVersionMismatch,
  kCorruptCheckpoint,
  kNoLabels,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports is an Error carrying one of the codes
// above; callers switch on code() rather than parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace protofs

#endif  // PROTOFS_ERROR_HPP_
