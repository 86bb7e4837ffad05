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

#ifndef STARGCN_RATING_GRAPH_H_
#define STARGCN_RATING_GRAPH_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace stargcn {

using EdgeId = int32_t;

enum class Side : uint8_t { kUser = 0, kItem = 1 };

inline Side Opposite(Side s) {
  return s == Side::kUser ? Side::kItem : Side::kUser;
}

struct NodeRef {
  Side side;
  int32_t index;
  bool operator==(const NodeRef&) const = default;
};

// Ordered set of admissible rating values. Each value is one link type;
// link types are 0-based internally.
class RatingLevels {
 public:
  RatingLevels() = default;
  explicit RatingLevels(std::vector<double> values);

  // lo, lo+step, ..., hi (inclusive).
  static RatingLevels Range(double lo, double hi, double step);

  int size() const { return static_cast<int>(values_.size()); }
  bool empty() const { return values_.empty(); }
  std::optional<int> IndexOf(double value) const;
  double value(int level) const { return values_[level]; }
  double min() const { return values_.front(); }
  double max() const { return values_.back(); }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const RatingLevels&) const = default;

 private:
  std::vector<double> values_;
};

struct Rating {
  int32_t user;
  int32_t item;
  double value;
};

struct Edge {
  int32_t user;
  int32_t item;
  double value;
  int32_t level;
};

struct Neighbor {
  int32_t node;  // index on the opposite side
  EdgeId edge;
  bool operator==(const Neighbor&) const = default;
};

// Immutable bipartite rating multigraph with per-level compressed adjacency.
// Edge ids follow input order.
class RatingGraph {
 public:
  RatingGraph() = default;

  static RatingGraph Build(std::span<const Rating> triples,
                           const RatingLevels& levels, int32_t num_users,
                           int32_t num_items);

  int32_t num_users() const { return num_users_; }
  int32_t num_items() const { return num_items_; }
  int32_t num_nodes(Side s) const {
    return s == Side::kUser ? num_users_ : num_items_;
  }
  int num_levels() const { return levels_.size(); }
  int32_t num_edges() const { return static_cast<int32_t>(edges_.size()); }
  const RatingLevels& levels() const { return levels_; }

  const Edge& edge(EdgeId id) const { return edges_[id]; }
  std::span<const Edge> edges() const { return edges_; }

  // Sorted by neighbor index.
  std::span<const Neighbor> Neighbors(NodeRef node, int level) const;
  int32_t Degree(NodeRef node, int level) const;
  int32_t TotalDegree(NodeRef node) const;

 private:
  size_t Slot(NodeRef node, int level) const {
    return static_cast<size_t>(node.index) * levels_.size() + level;
  }

  int32_t num_users_ = 0;
  int32_t num_items_ = 0;
  RatingLevels levels_;
  std::vector<Edge> edges_;
  // Indexed by Side. offsets_[s] has num_nodes(s) * R + 1 entries.
  std::vector<int64_t> offsets_[2];
  std::vector<Neighbor> entries_[2];
};

// Non-destructive overlay that hides a set of edges of a base graph.
class EdgeMaskView {
 public:
  using Observer = std::function<void(EdgeId)>;

  explicit EdgeMaskView(const RatingGraph& base);
  EdgeMaskView(const RatingGraph& base, std::span<const EdgeId> excluded);

  const RatingGraph& base() const { return *base_; }
  size_t num_excluded() const { return num_excluded_; }
  bool IsExcluded(EdgeId id) const {
    return num_excluded_ != 0 && excluded_[id] != 0;
  }

  // Called for every edge yielded by ForEachNeighbor / Neighbors.
  void set_observer(Observer observer) { observer_ = std::move(observer); }

  template <typename Fn>
  void ForEachNeighbor(NodeRef node, int level, Fn&& fn) const {
    for (const Neighbor& n : base_->Neighbors(node, level)) {
      if (num_excluded_ != 0 && excluded_[n.edge]) continue;
      if (observer_) observer_(n.edge);
      fn(n);
    }
  }

  std::vector<Neighbor> Neighbors(NodeRef node, int level) const;

  // Degree after exclusion.
  int32_t Degree(NodeRef node, int level) const;
  int32_t BaseDegree(NodeRef node, int level) const {
    return base_->Degree(node, level);
  }

 private:
  const RatingGraph* base_;
  size_t num_excluded_ = 0;
  std::vector<char> excluded_;  // by edge id, empty when nothing is hidden
  // Hidden edges per (node, level) slot, indexed by Side.
  std::vector<int32_t> removed_[2];
  Observer observer_;
};

inline EdgeMaskView MaskEdges(const RatingGraph& graph,
                              std::span<const EdgeId> edge_ids) {
  return EdgeMaskView(graph, edge_ids);
}

}  // namespace stargcn

#endif  // STARGCN_RATING_GRAPH_H_
