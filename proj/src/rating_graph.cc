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

#include "stargcn/rating_graph.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "stargcn/error.h"

namespace stargcn {

namespace {

std::string Describe(const Rating& r) {
  return "(user " + std::to_string(r.user) + ", item " +
         std::to_string(r.item) + ", rating " + std::to_string(r.value) + ")";
}

}  // namespace

RatingLevels::RatingLevels(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "rating scale has no levels");
  }
  for (size_t i = 1; i < values_.size(); ++i) {
    if (!(values_[i] > values_[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "rating levels must be strictly increasing");
    }
  }
}

RatingLevels RatingLevels::Range(double lo, double hi, double step) {
  std::vector<double> v;
  int n = static_cast<int>(std::llround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) v.push_back(lo + step * i);
  return RatingLevels(std::move(v));
}

std::optional<int> RatingLevels::IndexOf(double value) const {
  auto it = std::lower_bound(values_.begin(), values_.end(), value - 1e-9);
  if (it == values_.end() || std::abs(*it - value) > 1e-9) return std::nullopt;
  return static_cast<int>(it - values_.begin());
}

RatingGraph RatingGraph::Build(std::span<const Rating> triples,
                               const RatingLevels& levels, int32_t num_users,
                               int32_t num_items) {
  if (levels.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "rating scale has no levels");
  }
  RatingGraph g;
  g.num_users_ = num_users;
  g.num_items_ = num_items;
  g.levels_ = levels;
  g.edges_.reserve(triples.size());

  const int R = levels.size();
  std::unordered_set<int64_t> seen;
  seen.reserve(triples.size() * 2);
  for (const Rating& r : triples) {
    if (r.user < 0 || r.user >= num_users || r.item < 0 ||
        r.item >= num_items) {
      throw Error(ErrorCode::kIndexOutOfRange, Describe(r));
    }
    auto level = levels.IndexOf(r.value);
    if (!level) throw Error(ErrorCode::kUnknownRatingLevel, Describe(r));
    int64_t key = static_cast<int64_t>(r.user) * num_items + r.item;
    if (!seen.insert(key).second) {
      throw Error(ErrorCode::kDuplicateEdge, Describe(r));
    }
    g.edges_.push_back(Edge{r.user, r.item, levels.value(*level), *level});
  }

  for (int s = 0; s < 2; ++s) {
    Side side = static_cast<Side>(s);
    int32_t n = g.num_nodes(side);
    auto& offsets = g.offsets_[s];
    offsets.assign(static_cast<size_t>(n) * R + 1, 0);
    for (const Edge& e : g.edges_) {
      int32_t node = side == Side::kUser ? e.user : e.item;
      ++offsets[static_cast<size_t>(node) * R + e.level + 1];
    }
    for (size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
    auto& entries = g.entries_[s];
    entries.resize(g.edges_.size());
    std::vector<int64_t> cursor(offsets.begin(), offsets.end() - 1);
    for (EdgeId id = 0; id < g.num_edges(); ++id) {
      const Edge& e = g.edges_[id];
      int32_t node = side == Side::kUser ? e.user : e.item;
      int32_t other = side == Side::kUser ? e.item : e.user;
      entries[cursor[static_cast<size_t>(node) * R + e.level]++] =
          Neighbor{other, id};
    }
    for (size_t slot = 0; slot + 1 < offsets.size(); ++slot) {
      std::sort(entries.begin() + offsets[slot],
                entries.begin() + offsets[slot + 1],
                [](const Neighbor& a, const Neighbor& b) {
                  return a.node < b.node;
                });
    }
  }
  return g;
}

std::span<const Neighbor> RatingGraph::Neighbors(NodeRef node,
                                                 int level) const {
  const int s = static_cast<int>(node.side);
  size_t slot = Slot(node, level);
  return std::span<const Neighbor>(entries_[s].data() + offsets_[s][slot],
                                   entries_[s].data() + offsets_[s][slot + 1]);
}

int32_t RatingGraph::Degree(NodeRef node, int level) const {
  const int s = static_cast<int>(node.side);
  size_t slot = Slot(node, level);
  return static_cast<int32_t>(offsets_[s][slot + 1] - offsets_[s][slot]);
}

int32_t RatingGraph::TotalDegree(NodeRef node) const {
  const int s = static_cast<int>(node.side);
  size_t first = Slot(node, 0);
  return static_cast<int32_t>(offsets_[s][first + levels_.size()] -
                              offsets_[s][first]);
}

EdgeMaskView::EdgeMaskView(const RatingGraph& base) : base_(&base) {}

EdgeMaskView::EdgeMaskView(const RatingGraph& base,
                           std::span<const EdgeId> excluded)
    : base_(&base) {
  if (excluded.empty()) return;
  const int R = base.num_levels();
  excluded_.assign(base.num_edges(), 0);
  removed_[0].assign(static_cast<size_t>(base.num_users()) * R, 0);
  removed_[1].assign(static_cast<size_t>(base.num_items()) * R, 0);
  for (EdgeId id : excluded) {
    if (id < 0 || id >= base.num_edges()) {
      throw Error(ErrorCode::kUnknownEdgeId, std::to_string(id));
    }
    if (excluded_[id]) continue;
    excluded_[id] = 1;
    ++num_excluded_;
    const Edge& e = base.edge(id);
    ++removed_[0][static_cast<size_t>(e.user) * R + e.level];
    ++removed_[1][static_cast<size_t>(e.item) * R + e.level];
  }
}

std::vector<Neighbor> EdgeMaskView::Neighbors(NodeRef node, int level) const {
  std::vector<Neighbor> out;
  ForEachNeighbor(node, level, [&](const Neighbor& n) { out.push_back(n); });
  return out;
}

int32_t EdgeMaskView::Degree(NodeRef node, int level) const {
  int32_t d = base_->Degree(node, level);
  if (num_excluded_ == 0) return d;
  const auto& removed = removed_[static_cast<int>(node.side)];
  return d - removed[static_cast<size_t>(node.index) * base_->num_levels() +
                     level];
}

}  // namespace stargcn
