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

#include "protofs/error.hpp"

namespace protofs {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncated: return "Truncated";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kBadManifest: return "BadManifest";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kNotEnoughShots: return "NotEnoughShots";
    case ErrorCode::kZeroNormRow: return "ZeroNormRow";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNotScalarLoss: return "NotScalarLoss";
    case ErrorCode::kDetachedTensor: return "DetachedTensor";
    case ErrorCode::kDimNotSquare: return "DimNotSquare";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kNoLabels: return "NoLabels";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace protofs
