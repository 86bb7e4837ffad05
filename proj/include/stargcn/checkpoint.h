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

#ifndef STARGCN_CHECKPOINT_H_
#define STARGCN_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "stargcn/model.h"
#include "stargcn/rng.h"

namespace stargcn {

// Binary layout (all integers and reals little-endian):
//   "STARGCN\x01"  u32 version  u8 scalar_bytes
//   u32 num_users  u32 num_items
//   model spec fields (see WriteSpec)
//   u64 rng_seed  u64 rng_counter
//   u32 param_count, then per parameter:
//     u32 name_len, name bytes, u64 rows, u64 cols, rows*cols scalars
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  ModelSpec spec;
  int32_t num_users = 0;
  int32_t num_items = 0;
  RngStream rng;
  ParameterStore<T> params;
};

template <typename T>
std::vector<uint8_t> EncodeCheckpoint(const Checkpoint<T>& ckpt);

// Throws ParseError on malformed input and SpecMismatch when the stored
// precision differs from T.
template <typename T>
Checkpoint<T> DecodeCheckpoint(const std::vector<uint8_t>& bytes);

template <typename T>
void SaveCheckpoint(const std::string& path, const Checkpoint<T>& ckpt);

template <typename T>
Checkpoint<T> LoadCheckpoint(const std::string& path);

// Scalar width recorded in a checkpoint file (4 or 8).
int CheckpointScalarBytes(const std::string& path);

}  // namespace stargcn

#endif  // STARGCN_CHECKPOINT_H_
