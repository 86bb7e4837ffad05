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

#include "stargcn/tape.h"

namespace stargcn {

const char* OpKindName(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAffine: return "affine";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kDropout: return "dropout";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kSegmentSum: return "segment_sum";
    case OpKind::kWeightedSegmentSum: return "weighted_segment_sum";
    case OpKind::kReshape: return "reshape";
    case OpKind::kScaleRows: return "scale_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kRowDot: return "row_dot";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kScale: return "scale";
    case OpKind::kSumSquares: return "sum_squares";
  }
  return "unknown";
}

template class Tape<float>;
template class Tape<double>;

}  // namespace stargcn
