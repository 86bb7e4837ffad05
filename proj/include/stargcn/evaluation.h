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

#ifndef STARGCN_EVALUATION_H_
#define STARGCN_EVALUATION_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stargcn/model.h"
#include "stargcn/rating_graph.h"

namespace stargcn {

// Root mean squared error; throws EmptyInput.
double Rmse(std::span<const double> predictions, std::span<const double> truths);

void ClampPredictions(std::vector<double>& predictions,
                      const RatingLevels& levels);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

MeanStd Summarize(std::span<const double> values);

enum class SplitKind { kTransductive, kInductiveUsers, kInductiveItems };

const char* SplitKindName(SplitKind kind);
SplitKind ParseSplitKind(const std::string& name);

// Edge ids refer to the full dataset graph the plan was made from.
struct SplitPlan {
  SplitKind kind = SplitKind::kTransductive;
  uint64_t seed = 0;
  int32_t num_edges = 0;
  double test_fraction = 0.0;
  double valid_fraction = 0.0;
  double hold_fraction = 0.0;
  double reveal_fraction = 0.0;
  std::string source = "random";

  std::vector<EdgeId> train;
  std::vector<EdgeId> valid;
  std::vector<EdgeId> test;
  std::vector<EdgeId> revealed;
  std::vector<int32_t> held_out;  // node indices on the held-out side

  // Bookkeeping: coverage repairs and skipped single-edge nodes.
  int32_t reassigned = 0;
  std::vector<int32_t> skipped_degenerate;

  bool inductive() const { return kind != SplitKind::kTransductive; }
  Side held_side() const {
    return kind == SplitKind::kInductiveUsers ? Side::kUser : Side::kItem;
  }

  // Versioned text format; byte-identical for identical plans.
  std::string Serialize() const;
  static SplitPlan Parse(const std::string& text);
  void Save(const std::string& path) const;
  static SplitPlan Load(const std::string& path);

  bool operator==(const SplitPlan&) const = default;
};

// Uniform edge partition. Test/valid edges whose endpoints would have no
// training edge are moved back to train (counted in `reassigned`).
SplitPlan MakeTransductiveSplit(const RatingGraph& graph, double test_fraction,
                                double valid_fraction, uint64_t seed);

// Uses a fixed test set (e.g. a provided fold); validation is carved from
// the remaining edges.
SplitPlan MakeFoldSplit(const RatingGraph& graph,
                        std::span<const EdgeId> test_edges,
                        double valid_fraction, uint64_t seed,
                        std::string source);

// Holds out `hold_fraction` of one side's nodes. Each held node's ratings
// are split into revealed (inference-only) and test edges; nodes with fewer
// than two ratings are skipped.
SplitPlan MakeInductiveSplit(const RatingGraph& graph, Side side,
                             double hold_fraction, double reveal_fraction,
                             uint64_t seed, double valid_fraction = 0.05);

// Graph over the same node sets containing only `ids`, renumbered in order.
RatingGraph Subgraph(const RatingGraph& graph, std::span<const EdgeId> ids);

std::vector<Rating> EdgesAsRatings(const RatingGraph& graph,
                                   std::span<const EdgeId> ids);

// Scores plan.test with the last block. Inference graph is train (plus
// revealed edges for inductive plans); held-out nodes start from a zero
// embedding. Parameters are not modified.
template <typename T>
double EvaluatePlan(const ModelSpec& spec, ParameterStore<T>& params,
                    const FeatureSet<T>& features, const SplitPlan& plan,
                    const RatingGraph& graph);

}  // namespace stargcn

#endif  // STARGCN_EVALUATION_H_
