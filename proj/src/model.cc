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

#include "stargcn/model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "stargcn/error.h"

namespace stargcn {

namespace {

constexpr Side kSides[2] = {Side::kUser, Side::kItem};

const char* SideName(Side s) { return s == Side::kUser ? "user" : "item"; }

template <typename T>
AffineIds AddAffine(ParameterStore<T>& store, const std::string& name,
                    int out_dim, int in_dim, RngStream& rng, int fan_in,
                    int fan_out) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Parameter<T> w;
  w.name = name + ".w";
  w.value.resize(out_dim, in_dim);
  for (Eigen::Index i = 0; i < w.value.size(); ++i) {
    w.value.data()[i] = static_cast<T>((2.0 * rng.Uniform() - 1.0) * bound);
  }
  Parameter<T> b;
  b.name = name + ".b";
  b.value = Matrix<T>::Zero(1, out_dim);
  AffineIds ids;
  ids.w = static_cast<int>(store.params.size());
  store.params.push_back(std::move(w));
  ids.b = static_cast<int>(store.params.size());
  store.params.push_back(std::move(b));
  return ids;
}

template <typename T>
AffineIds AddAffine(ParameterStore<T>& store, const std::string& name,
                    int out_dim, int in_dim, RngStream& rng) {
  return AddAffine(store, name, out_dim, in_dim, rng, in_dim, out_dim);
}

template <typename T>
Var ApplyAffine(Tape<T>& tape, ParameterStore<T>& params, AffineIds ids,
                Var x) {
  return tape.Affine(x, tape.Param(params[ids.w]), tape.Param(params[ids.b]));
}

}  // namespace

void ModelSpec::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kSpecViolation, what);
  };
  if (num_blocks < 1) fail("num_blocks must be >= 1");
  if (layers_per_block < 1) fail("layers_per_block must be >= 1");
  if (!reconstruction && num_blocks > 1) {
    fail("multiple blocks require the reconstruction decoder");
  }
  if (static_cast<int>(lambda.size()) != num_blocks) {
    fail("lambda needs one weight per block");
  }
  if (!reconstruction) {
    for (double l : lambda) {
      if (l != 0.0) fail("lambda must be zero without reconstruction");
    }
  }
  if (embed_dim < 1 || aggregate_dim < 1 || encoder_dim < 1 ||
      projection_dim < 1 || num_levels < 1) {
    fail("dimensions must be positive");
  }
  if (feature_dim < 0) fail("feature_dim must be >= 0");
  if (feature_dim == 0 && (user_feature_in > 0 || item_feature_in > 0)) {
    fail("raw feature widths given but feature_dim is 0");
  }
  if (feature_dim > 0 && user_feature_in == 0 && item_feature_in == 0) {
    fail("feature_dim set but no side has raw features");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0,1)");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    fail("leaky slope must be in [0,1)");
  }
}

template <typename T>
int ParameterStore<T>::Find(const std::string& name) const {
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

template <typename T>
void ParameterStore<T>::ZeroGrad() {
  for (auto& p : params) p.ZeroGrad();
}

template <typename T>
size_t ParameterStore<T>::num_scalars() const {
  size_t n = 0;
  for (const auto& p : params) n += static_cast<size_t>(p.value.size());
  return n;
}

template <typename T>
bool ParameterStore<T>::SameValues(const ParameterStore& other) const {
  if (params.size() != other.params.size()) return false;
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != other.params[i].name) return false;
    if (params[i].value.rows() != other.params[i].value.rows() ||
        params[i].value.cols() != other.params[i].value.cols()) {
      return false;
    }
    if (params[i].value != other.params[i].value) return false;
  }
  return true;
}

NodeBatch NodeBatch::All(int32_t num_users, int32_t num_items) {
  std::vector<int32_t> u(num_users), v(num_items);
  for (int32_t i = 0; i < num_users; ++i) u[i] = i;
  for (int32_t i = 0; i < num_items; ++i) v[i] = i;
  return FromNodes(std::move(u), std::move(v), num_users, num_items);
}

NodeBatch NodeBatch::FromNodes(std::vector<int32_t> users,
                               std::vector<int32_t> items, int32_t num_users,
                               int32_t num_items) {
  NodeBatch b;
  b.users = std::move(users);
  b.items = std::move(items);
  b.user_local.assign(num_users, -1);
  b.item_local.assign(num_items, -1);
  for (size_t i = 0; i < b.users.size(); ++i) {
    int32_t u = b.users[i];
    if (u < 0 || u >= num_users) {
      throw Error(ErrorCode::kIndexOutOfRange, "batch user " + std::to_string(u));
    }
    if (b.user_local[u] >= 0) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate batch user");
    }
    b.user_local[u] = static_cast<int32_t>(i);
  }
  for (size_t i = 0; i < b.items.size(); ++i) {
    int32_t v = b.items[i];
    if (v < 0 || v >= num_items) {
      throw Error(ErrorCode::kIndexOutOfRange, "batch item " + std::to_string(v));
    }
    if (b.item_local[v] >= 0) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate batch item");
    }
    b.item_local[v] = static_cast<int32_t>(i);
  }
  return b;
}

template <typename T>
LocalAdjacency<T> BuildLocalAdjacency(const EdgeMaskView& view,
                                      const NodeBatch& batch,
                                      bool effective_degrees) {
  const RatingGraph& g = view.base();
  const int R = g.num_levels();
  if (static_cast<int32_t>(batch.user_local.size()) != g.num_users() ||
      static_cast<int32_t>(batch.item_local.size()) != g.num_items()) {
    throw Error(ErrorCode::kShapeMismatch, "batch does not match graph");
  }
  auto degree = [&](NodeRef n, int r) {
    return effective_degrees ? view.Degree(n, r) : view.BaseDegree(n, r);
  };
  LocalAdjacency<T> adj;
  for (Side s : kSides) {
    auto ws = std::make_shared<WeightedSegments<T>>();
    Segments& segs = ws->segments;
    const auto& nodes = batch.nodes(s);
    segs.offsets.reserve(nodes.size() * R + 1);
    for (int32_t node : nodes) {
      NodeRef self{s, node};
      for (int r = 0; r < R; ++r) {
        const int32_t d_self = degree(self, r);
        view.ForEachNeighbor(self, r, [&](const Neighbor& nb) {
          NodeRef other{Opposite(s), nb.node};
          int32_t local = batch.Local(other);
          if (local < 0) return;
          const double c = std::sqrt(static_cast<double>(d_self) *
                                     static_cast<double>(degree(other, r)));
          segs.index.push_back(local);
          ws->weight.push_back(static_cast<T>(1.0 / c));
        });
        segs.offsets.push_back(static_cast<int64_t>(segs.index.size()));
      }
    }
    adj.into[static_cast<int>(s)] = std::move(ws);
  }
  return adj;
}

template <typename T>
InputVars BuildInput(Tape<T>& tape, const ForwardContext<T>& ctx,
                     const MaskPlan& plan) {
  const ModelSpec& spec = *ctx.spec;
  ParameterStore<T>& params = *ctx.params;
  const NodeBatch& batch = *ctx.batch;
  const int32_t num_users = static_cast<int32_t>(batch.user_local.size());
  Var table = tape.Param(params[params.embedding]);
  InputVars out;
  for (Side s : kSides) {
    const int si = static_cast<int>(s);
    const auto& nodes = batch.nodes(s);
    std::vector<int32_t> rows(nodes.begin(), nodes.end());
    if (s == Side::kItem) {
      for (auto& r : rows) r += num_users;
    }
    Var xe = tape.GatherRows(table, rows);

    std::vector<T> keep(nodes.size(), T(1));
    bool any_zeroed = false;
    for (int32_t z : plan.zeroed(s)) {
      int32_t local = batch.Local({s, z});
      if (local < 0) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    std::string("zeroed ") + SideName(s) + " " +
                        std::to_string(z) + " outside batch");
      }
      keep[local] = T(0);
      any_zeroed = true;
    }
    Var xe_in = any_zeroed ? tape.ScaleRows(xe, std::move(keep)) : xe;

    if (spec.feature_dim == 0) {
      out.clean[si] = xe;
      out.input[si] = xe_in;
      continue;
    }
    Var xf;
    if (spec.feature_in(s) > 0) {
      const Matrix<T>* raw = ctx.features ? ctx.features->side(s) : nullptr;
      if (raw == nullptr) {
        throw Error(ErrorCode::kMissingFeatures,
                    std::string(SideName(s)) + " features required by spec");
      }
      if (raw->cols() != spec.feature_in(s)) {
        throw Error(ErrorCode::kShapeMismatch,
                    std::string(SideName(s)) + " feature width");
      }
      Matrix<T> f(static_cast<Eigen::Index>(nodes.size()), raw->cols());
      for (size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i] >= raw->rows()) {
          throw Error(ErrorCode::kIndexOutOfRange, "feature row");
        }
        f.row(static_cast<Eigen::Index>(i)) = raw->row(nodes[i]);
      }
      Var fv = tape.Constant(std::move(f));
      Var hidden = tape.LeakyRelu(
          ApplyAffine(tape, params, params.feature_hidden[si], fv),
          static_cast<T>(spec.leaky_slope));
      xf = ApplyAffine(tape, params, params.feature_out[si], hidden);
    } else {
      xf = tape.Constant(
          Matrix<T>::Zero(static_cast<Eigen::Index>(nodes.size()),
                          spec.feature_dim));
    }
    out.clean[si] = tape.ConcatCols(xe, xf);
    out.input[si] = any_zeroed ? tape.ConcatCols(xe_in, xf) : out.clean[si];
  }
  return out;
}

template <typename T>
std::array<Var, 2> Encode(Tape<T>& tape, const ForwardContext<T>& ctx,
                          int block, const std::array<Var, 2>& x) {
  const ModelSpec& spec = *ctx.spec;
  ParameterStore<T>& params = *ctx.params;
  const BlockIds& ids = params.blocks.at(block);
  const T slope = static_cast<T>(spec.leaky_slope);
  const int R = spec.num_levels;
  std::array<Var, 2> cur = x;
  for (const EncoderLayerIds& layer : ids.layers) {
    std::array<Var, 2> dropped;
    for (int si = 0; si < 2; ++si) {
      if (ctx.training && spec.dropout > 0.0 && ctx.rng == nullptr) {
        throw Error(ErrorCode::kInvalidArgument, "training needs an rng");
      }
      dropped[si] = ctx.training && spec.dropout > 0.0
                        ? tape.Dropout(cur[si], static_cast<T>(spec.dropout),
                                       *ctx.rng, true)
                        : cur[si];
    }
    std::array<Var, 2> next;
    for (Side s : kSides) {
      const int si = static_cast<int>(s);
      const int src = 1 - si;
      const auto& segs = ctx.adjacency->into[si];
      const int64_t n = ctx.batch->size(s);
      if (segs->segments.num_segments() != n * R) {
        throw Error(ErrorCode::kShapeMismatch, "adjacency does not match batch");
      }
      const int64_t in_dim = tape.value(dropped[src]).cols();
      Var z = tape.WeightedSegmentSum(dropped[src], segs);
      z = tape.Reshape(z, n, R * in_dim);
      Var y = tape.LeakyRelu(ApplyAffine(tape, params, layer.aggregate[si], z),
                             slope);
      next[si] =
          tape.LeakyRelu(ApplyAffine(tape, params, layer.dense[si], y), slope);
    }
    cur = next;
  }
  return cur;
}

template <typename T>
Var Decode(Tape<T>& tape, const ForwardContext<T>& ctx, int block, Var h) {
  ParameterStore<T>& params = *ctx.params;
  const BlockIds& ids = params.blocks.at(block);
  if (!ctx.spec->reconstruction || !ids.decode_hidden.present()) {
    throw Error(ErrorCode::kDecoderAbsent, "block " + std::to_string(block));
  }
  Var hidden = tape.LeakyRelu(ApplyAffine(tape, params, ids.decode_hidden, h),
                              static_cast<T>(ctx.spec->leaky_slope));
  return ApplyAffine(tape, params, ids.decode_out, hidden);
}

template <typename T>
Var PredictRatings(Tape<T>& tape, const ForwardContext<T>& ctx, int block,
                   Var h_users, Var h_items, std::span<const LocalPair> pairs) {
  ParameterStore<T>& params = *ctx.params;
  const BlockIds& ids = params.blocks.at(block);
  const auto nu = tape.value(h_users).rows();
  const auto ni = tape.value(h_items).rows();
  std::vector<int32_t> us, vs;
  us.reserve(pairs.size());
  vs.reserve(pairs.size());
  for (const LocalPair& p : pairs) {
    if (p.user < 0 || p.user >= nu || p.item < 0 || p.item >= ni) {
      throw Error(ErrorCode::kUnknownPair,
                  "(" + std::to_string(p.user) + ", " +
                      std::to_string(p.item) + ")");
    }
    us.push_back(p.user);
    vs.push_back(p.item);
  }
  Var pu = ApplyAffine(tape, params, ids.project[0], h_users);
  Var pv = ApplyAffine(tape, params, ids.project[1], h_items);
  return tape.RowDot(tape.GatherRows(pu, us), tape.GatherRows(pv, vs));
}

template <typename T>
ForwardVars ForwardAllBlocks(Tape<T>& tape, const ForwardContext<T>& ctx,
                             const MaskPlan& plan,
                             std::span<const LocalPair> pairs) {
  const ModelSpec& spec = *ctx.spec;
  spec.Validate();
  if (static_cast<int>(ctx.params->blocks.size()) != spec.num_blocks) {
    throw Error(ErrorCode::kSpecMismatch, "parameter blocks vs spec");
  }
  ForwardVars out;
  out.inputs = BuildInput(tape, ctx, plan);
  std::array<Var, 2> x{out.inputs.input[0], out.inputs.input[1]};
  for (int b = 0; b < spec.num_blocks; ++b) {
    BlockVars bv;
    auto h = Encode(tape, ctx, b, x);
    bv.h[0] = h[0];
    bv.h[1] = h[1];
    bv.prediction = PredictRatings(tape, ctx, b, h[0], h[1], pairs);
    if (spec.reconstruction) {
      bv.recon[0] = Decode(tape, ctx, b, h[0]);
      bv.recon[1] = Decode(tape, ctx, b, h[1]);
      x = {bv.recon[0], bv.recon[1]};
    }
    out.blocks.push_back(bv);
  }
  return out;
}

template <typename T>
ParameterStore<T> InitParameters(const ModelSpec& spec, RngStream& rng,
                                 int32_t num_users, int32_t num_items) {
  spec.Validate();
  ParameterStore<T> store;
  const int d_in = spec.input_dim();
  const int R = spec.num_levels;

  Parameter<T> emb;
  emb.name = "embedding";
  emb.value.resize(static_cast<Eigen::Index>(num_users) + num_items,
                   spec.embed_dim);
  const double sd = 1.0 / std::sqrt(static_cast<double>(spec.embed_dim));
  for (Eigen::Index i = 0; i < emb.value.size(); ++i) {
    emb.value.data()[i] = static_cast<T>(rng.Normal(0.0, sd));
  }
  store.embedding = 0;
  store.params.push_back(std::move(emb));

  if (spec.feature_dim > 0) {
    for (Side s : kSides) {
      const int si = static_cast<int>(s);
      if (spec.feature_in(s) == 0) continue;
      std::string base = std::string("feature.") + SideName(s);
      store.feature_hidden[si] = AddAffine(store, base + ".hidden",
                                           spec.feature_dim,
                                           spec.feature_in(s), rng);
      store.feature_out[si] = AddAffine(store, base + ".out", spec.feature_dim,
                                        spec.feature_dim, rng);
    }
  }

  const int distinct =
      spec.combine == Combine::kRecurrent ? 1 : spec.num_blocks;
  for (int b = 0; b < distinct; ++b) {
    BlockIds ids;
    const std::string bname = "block" + std::to_string(b);
    for (int l = 0; l < spec.layers_per_block; ++l) {
      const int in_dim = l == 0 ? d_in : spec.encoder_dim;
      const std::string lname = bname + ".layer" + std::to_string(l);
      EncoderLayerIds layer;
      for (Side s : kSides) {
        const int si = static_cast<int>(s);
        const std::string sname = lname + "." + SideName(s);
        // Xavier bounds are taken per link-type matrix W_a^r.
        layer.aggregate[si] = AddAffine(store, sname + ".aggregate",
                                        spec.aggregate_dim, R * in_dim, rng,
                                        in_dim, spec.aggregate_dim);
        layer.dense[si] = AddAffine(store, sname + ".dense", spec.encoder_dim,
                                    spec.aggregate_dim, rng);
      }
      ids.layers.push_back(layer);
    }
    if (spec.reconstruction) {
      ids.decode_hidden =
          AddAffine(store, bname + ".decode.hidden", d_in, spec.encoder_dim, rng);
      ids.decode_out = AddAffine(store, bname + ".decode.out", d_in, d_in, rng);
    }
    ids.project[0] = AddAffine(store, bname + ".project.user",
                               spec.projection_dim, spec.encoder_dim, rng);
    ids.project[1] = AddAffine(store, bname + ".project.item",
                               spec.projection_dim, spec.encoder_dim, rng);
    store.blocks.push_back(std::move(ids));
  }
  while (static_cast<int>(store.blocks.size()) < spec.num_blocks) {
    store.blocks.push_back(store.blocks.front());
  }
  store.ZeroGrad();
  return store;
}

template <typename T>
std::vector<T> PredictPairs(const ModelSpec& spec, ParameterStore<T>& params,
                            const FeatureSet<T>& features,
                            const EdgeMaskView& view, const MaskPlan& plan,
                            std::span<const Rating> pairs) {
  const RatingGraph& g = view.base();
  NodeBatch batch = NodeBatch::All(g.num_users(), g.num_items());
  LocalAdjacency<T> adj =
      BuildLocalAdjacency<T>(view, batch, spec.effective_degrees);
  std::vector<LocalPair> local;
  local.reserve(pairs.size());
  for (const Rating& p : pairs) {
    if (p.user < 0 || p.user >= g.num_users() || p.item < 0 ||
        p.item >= g.num_items()) {
      throw Error(ErrorCode::kUnknownPair,
                  "(" + std::to_string(p.user) + ", " +
                      std::to_string(p.item) + ")");
    }
    local.push_back({p.user, p.item});
  }
  ForwardContext<T> ctx;
  ctx.spec = &spec;
  ctx.params = &params;
  ctx.features = &features;
  ctx.batch = &batch;
  ctx.adjacency = &adj;
  ctx.training = false;
  Tape<T> tape;
  ForwardVars fv = ForwardAllBlocks(tape, ctx, plan, local);
  const Matrix<T>& pred = tape.value(fv.final_prediction());
  return std::vector<T>(pred.data(), pred.data() + pred.size());
}

#define STARGCN_INSTANTIATE_MODEL(T)                                          \
  template class ParameterStore<T>;                                           \
  template LocalAdjacency<T> BuildLocalAdjacency<T>(const EdgeMaskView&,      \
                                                    const NodeBatch&, bool);  \
  template InputVars BuildInput<T>(Tape<T>&, const ForwardContext<T>&,        \
                                   const MaskPlan&);                          \
  template std::array<Var, 2> Encode<T>(Tape<T>&, const ForwardContext<T>&,   \
                                        int, const std::array<Var, 2>&);      \
  template Var Decode<T>(Tape<T>&, const ForwardContext<T>&, int, Var);       \
  template Var PredictRatings<T>(Tape<T>&, const ForwardContext<T>&, int,     \
                                 Var, Var, std::span<const LocalPair>);       \
  template ForwardVars ForwardAllBlocks<T>(Tape<T>&, const ForwardContext<T>&, \
                                           const MaskPlan&,                   \
                                           std::span<const LocalPair>);       \
  template ParameterStore<T> InitParameters<T>(const ModelSpec&, RngStream&,  \
                                               int32_t, int32_t);             \
  template std::vector<T> PredictPairs<T>(                                    \
      const ModelSpec&, ParameterStore<T>&, const FeatureSet<T>&,             \
      const EdgeMaskView&, const MaskPlan&, std::span<const Rating>);

STARGCN_INSTANTIATE_MODEL(float)
STARGCN_INSTANTIATE_MODEL(double)

#undef STARGCN_INSTANTIATE_MODEL

}  // namespace stargcn
