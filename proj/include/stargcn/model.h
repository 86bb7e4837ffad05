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

#ifndef STARGCN_MODEL_H_
#define STARGCN_MODEL_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stargcn/rating_graph.h"
#include "stargcn/rng.h"
#include "stargcn/tape.h"

namespace stargcn {

enum class Combine { kStacked, kRecurrent };

// Architecture description. A "layer" is one full multi-link aggregation
// (aggregate -> act -> dense -> act); a block is layers_per_block layers
// followed by an optional decoder.
struct ModelSpec {
  int num_blocks = 2;
  int layers_per_block = 1;
  Combine combine = Combine::kStacked;
  bool reconstruction = true;
  int embed_dim = 32;        // d_e
  int feature_dim = 0;       // d_f, 0 when no side features are used
  int user_feature_in = 0;   // raw user feature width, 0 if absent
  int item_feature_in = 0;   // raw item feature width, 0 if absent
  int aggregate_dim = 250;   // d_a
  int encoder_dim = 75;      // d_h
  int projection_dim = 64;   // d_r
  int num_levels = 5;        // R
  double dropout = 0.5;
  double leaky_slope = 0.1;
  std::vector<double> lambda;  // one per block
  // Normalize messages with post-mask degrees (true) or base-graph degrees.
  bool effective_degrees = true;

  int input_dim() const { return embed_dim + feature_dim; }
  int total_layers() const { return num_blocks * layers_per_block; }
  int feature_in(Side s) const {
    return s == Side::kUser ? user_feature_in : item_feature_in;
  }

  // Throws SpecViolation.
  void Validate() const;

  bool operator==(const ModelSpec&) const = default;
};

struct AffineIds {
  int w = -1;
  int b = -1;
  bool present() const { return w >= 0; }
};

// Index 0 holds the parameters of messages flowing into users, index 1 into
// items.
struct EncoderLayerIds {
  AffineIds aggregate[2];
  AffineIds dense[2];
};

struct BlockIds {
  std::vector<EncoderLayerIds> layers;
  AffineIds decode_hidden;
  AffineIds decode_out;
  AffineIds project[2];
};

template <typename T>
class ParameterStore {
 public:
  std::vector<Parameter<T>> params;
  int embedding = -1;
  AffineIds feature_hidden[2];
  AffineIds feature_out[2];
  // One entry per block; recurrent models repeat the same ids.
  std::vector<BlockIds> blocks;

  Parameter<T>& operator[](int id) { return params[id]; }
  const Parameter<T>& operator[](int id) const { return params[id]; }
  int Find(const std::string& name) const;
  void ZeroGrad();
  size_t num_scalars() const;

  bool SameValues(const ParameterStore& other) const;
};

// Users and items taking part in one forward pass, as global indices, plus
// the reverse lookup.
struct NodeBatch {
  std::vector<int32_t> users;
  std::vector<int32_t> items;
  std::vector<int32_t> user_local;  // size num_users, -1 when absent
  std::vector<int32_t> item_local;

  static NodeBatch All(int32_t num_users, int32_t num_items);
  static NodeBatch FromNodes(std::vector<int32_t> users,
                             std::vector<int32_t> items, int32_t num_users,
                             int32_t num_items);

  const std::vector<int32_t>& nodes(Side s) const {
    return s == Side::kUser ? users : items;
  }
  int32_t Local(NodeRef n) const {
    const auto& m = n.side == Side::kUser ? user_local : item_local;
    return m[n.index];
  }
  int32_t size(Side s) const { return static_cast<int32_t>(nodes(s).size()); }
};

// Nodes selected for reconstruction; `zeroed` ones get a zero embedding.
struct MaskPlan {
  std::vector<int32_t> masked_users;
  std::vector<int32_t> masked_items;
  std::vector<int32_t> zeroed_users;
  std::vector<int32_t> zeroed_items;

  const std::vector<int32_t>& masked(Side s) const {
    return s == Side::kUser ? masked_users : masked_items;
  }
  const std::vector<int32_t>& zeroed(Side s) const {
    return s == Side::kUser ? zeroed_users : zeroed_items;
  }
  bool empty() const { return masked_users.empty() && masked_items.empty(); }
};

// Raw side features, one row per global node. Either pointer may be null.
template <typename T>
struct FeatureSet {
  const Matrix<T>* users = nullptr;
  const Matrix<T>* items = nullptr;
  const Matrix<T>* side(Side s) const {
    return s == Side::kUser ? users : items;
  }
};

// Normalized message coefficients restricted to a NodeBatch. into[s] has
// one segment per (local node of side s, level); entries index local nodes
// of the opposite side.
template <typename T>
struct LocalAdjacency {
  std::shared_ptr<const WeightedSegments<T>> into[2];
};

template <typename T>
LocalAdjacency<T> BuildLocalAdjacency(const EdgeMaskView& view,
                                      const NodeBatch& batch,
                                      bool effective_degrees);

struct LocalPair {
  int32_t user;  // local index into NodeBatch::users
  int32_t item;
};

template <typename T>
struct ForwardContext {
  const ModelSpec* spec = nullptr;
  ParameterStore<T>* params = nullptr;
  const FeatureSet<T>* features = nullptr;
  const NodeBatch* batch = nullptr;
  const LocalAdjacency<T>* adjacency = nullptr;
  bool training = false;
  RngStream* rng = nullptr;  // required when training with dropout
};

struct InputVars {
  Var clean[2];  // pre-mask x per side
  Var input[2];  // x after zeroing
};

struct BlockVars {
  Var h[2];
  Var prediction;  // [pairs x 1]
  Var recon[2];    // invalid when the block has no decoder
};

struct ForwardVars {
  InputVars inputs;
  std::vector<BlockVars> blocks;
  Var final_prediction() const { return blocks.back().prediction; }
};

template <typename T>
InputVars BuildInput(Tape<T>& tape, const ForwardContext<T>& ctx,
                     const MaskPlan& plan);

// Runs the encoder layers of `block` on inputs x (local rows per side).
template <typename T>
std::array<Var, 2> Encode(Tape<T>& tape, const ForwardContext<T>& ctx,
                          int block, const std::array<Var, 2>& x);

template <typename T>
Var Decode(Tape<T>& tape, const ForwardContext<T>& ctx, int block, Var h);

template <typename T>
Var PredictRatings(Tape<T>& tape, const ForwardContext<T>& ctx, int block,
                   Var h_users, Var h_items, std::span<const LocalPair> pairs);

template <typename T>
ForwardVars ForwardAllBlocks(Tape<T>& tape, const ForwardContext<T>& ctx,
                             const MaskPlan& plan,
                             std::span<const LocalPair> pairs);

template <typename T>
ParameterStore<T> InitParameters(const ModelSpec& spec, RngStream& rng,
                                 int32_t num_users, int32_t num_items);

// Eval-mode forward over every node of view's base graph, returning the
// last block's prediction for each (global user, global item) pair.
template <typename T>
std::vector<T> PredictPairs(const ModelSpec& spec, ParameterStore<T>& params,
                            const FeatureSet<T>& features,
                            const EdgeMaskView& view, const MaskPlan& plan,
                            std::span<const Rating> pairs);

}  // namespace stargcn

#endif  // STARGCN_MODEL_H_
