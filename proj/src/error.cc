/* Copyright 2026 The STAR-GCN Authors. All Rights Reserved.

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

#include "stargcn/error.h"

namespace stargcn {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDuplicateEdge: return "DuplicateEdge";
    case ErrorCode::kUnknownRatingLevel: return "UnknownRatingLevel";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kUnknownEdgeId: return "UnknownEdgeId";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNotScalarLoss: return "NotScalarLoss";
    case ErrorCode::kMissingFeatures: return "MissingFeatures";
    case ErrorCode::kDecoderAbsent: return "DecoderAbsent";
    case ErrorCode::kUnknownPair: return "UnknownPair";
    case ErrorCode::kSpecViolation: return "SpecViolation";
    case ErrorCode::kEmptyGraph: return "EmptyGraph";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kDegenerateNode: return "DegenerateNode";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kDimensionConflict: return "DimensionConflict";
    case ErrorCode::kSpecMismatch: return "SpecMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace stargcn
