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

#include "stargcn/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stargcn/error.h"
#include "stargcn/rng.h"

namespace stargcn {

namespace {

// Moves non-train edges whose endpoints lack training support into train.
int32_t EnforceCoverage(const RatingGraph& graph, std::vector<EdgeId>& train,
                        std::vector<EdgeId>& other) {
  std::vector<int32_t> du(graph.num_users(), 0), dv(graph.num_items(), 0);
  for (EdgeId id : train) {
    ++du[graph.edge(id).user];
    ++dv[graph.edge(id).item];
  }
  int32_t moved = 0;
  std::vector<EdgeId> kept;
  for (EdgeId id : other) {
    const Edge& e = graph.edge(id);
    if (du[e.user] == 0 || dv[e.item] == 0) {
      train.push_back(id);
      ++du[e.user];
      ++dv[e.item];
      ++moved;
    } else {
      kept.push_back(id);
    }
  }
  other = std::move(kept);
  return moved;
}

std::string FormatReal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename I>
void WriteList(std::ostringstream& os, const char* name,
               const std::vector<I>& ids) {
  os << name << ' ' << ids.size() << '\n';
  for (size_t i = 0; i < ids.size(); ++i) {
    os << ids[i] << ((i + 1) % 20 == 0 || i + 1 == ids.size() ? '\n' : ' ');
  }
}

}  // namespace

double Rmse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.empty() || predictions.size() != truths.size()) {
    throw Error(ErrorCode::kEmptyInput, "rmse needs equal, nonempty inputs");
  }
  double s = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    double d = predictions[i] - truths[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predictions.size()));
}

void ClampPredictions(std::vector<double>& predictions,
                      const RatingLevels& levels) {
  for (double& p : predictions) p = std::clamp(p, levels.min(), levels.max());
}

MeanStd Summarize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "no values");
  MeanStd r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

const char* SplitKindName(SplitKind kind) {
  switch (kind) {
    case SplitKind::kTransductive: return "transductive";
    case SplitKind::kInductiveUsers: return "inductive-users";
    case SplitKind::kInductiveItems: return "inductive-items";
  }
  return "unknown";
}

SplitKind ParseSplitKind(const std::string& name) {
  if (name == "transductive") return SplitKind::kTransductive;
  if (name == "inductive-users") return SplitKind::kInductiveUsers;
  if (name == "inductive-items") return SplitKind::kInductiveItems;
  throw Error(ErrorCode::kParseError, "unknown split kind " + name);
}

std::string SplitPlan::Serialize() const {
  std::ostringstream os;
  os << "stargcn-split-plan 1\n";
  os << "kind " << SplitKindName(kind) << '\n';
  os << "seed " << seed << '\n';
  os << "num_edges " << num_edges << '\n';
  os << "test_fraction " << FormatReal(test_fraction) << '\n';
  os << "valid_fraction " << FormatReal(valid_fraction) << '\n';
  os << "hold_fraction " << FormatReal(hold_fraction) << '\n';
  os << "reveal_fraction " << FormatReal(reveal_fraction) << '\n';
  os << "source " << source << '\n';
  os << "reassigned " << reassigned << '\n';
  WriteList(os, "train", train);
  WriteList(os, "valid", valid);
  WriteList(os, "test", test);
  WriteList(os, "revealed", revealed);
  WriteList(os, "held_out", held_out);
  WriteList(os, "skipped", skipped_degenerate);
  os << "end\n";
  return os.str();
}

SplitPlan SplitPlan::Parse(const std::string& text) {
  std::istringstream is(text);
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(is >> k) || k != key) {
      throw Error(ErrorCode::kParseError, "split plan: expected '" + key + "'");
    }
  };
  auto read_list = [&](const std::string& key, auto& out) {
    expect(key);
    size_t n = 0;
    if (!(is >> n)) throw Error(ErrorCode::kParseError, "split plan: count");
    out.resize(n);
    for (auto& v : out) {
      if (!(is >> v)) throw Error(ErrorCode::kParseError, "split plan: " + key);
    }
  };
  SplitPlan p;
  expect("stargcn-split-plan");
  int version = 0;
  is >> version;
  if (version != 1) throw Error(ErrorCode::kParseError, "split plan version");
  std::string kind;
  expect("kind");
  is >> kind;
  p.kind = ParseSplitKind(kind);
  expect("seed");
  is >> p.seed;
  expect("num_edges");
  is >> p.num_edges;
  expect("test_fraction");
  is >> p.test_fraction;
  expect("valid_fraction");
  is >> p.valid_fraction;
  expect("hold_fraction");
  is >> p.hold_fraction;
  expect("reveal_fraction");
  is >> p.reveal_fraction;
  expect("source");
  is >> p.source;
  expect("reassigned");
  is >> p.reassigned;
  if (!is) throw Error(ErrorCode::kParseError, "split plan header");
  read_list("train", p.train);
  read_list("valid", p.valid);
  read_list("test", p.test);
  read_list("revealed", p.revealed);
  read_list("held_out", p.held_out);
  read_list("skipped", p.skipped_degenerate);
  expect("end");
  return p;
}

void SplitPlan::Save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << Serialize();
}

SplitPlan SplitPlan::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str());
}

SplitPlan MakeTransductiveSplit(const RatingGraph& graph, double test_fraction,
                                double valid_fraction, uint64_t seed) {
  if (!(test_fraction > 0.0 && valid_fraction >= 0.0 &&
        test_fraction + valid_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "split fractions");
  }
  SplitPlan p;
  p.kind = SplitKind::kTransductive;
  p.seed = seed;
  p.num_edges = graph.num_edges();
  p.test_fraction = test_fraction;
  p.valid_fraction = valid_fraction;

  std::vector<EdgeId> ids(graph.num_edges());
  for (EdgeId i = 0; i < graph.num_edges(); ++i) ids[i] = i;
  RngStream rng(seed);
  rng.Shuffle(ids.begin(), ids.end());
  const auto n = ids.size();
  const auto n_test = static_cast<size_t>(std::llround(test_fraction * n));
  const auto n_valid = static_cast<size_t>(std::llround(valid_fraction * n));
  p.test.assign(ids.begin(), ids.begin() + n_test);
  p.valid.assign(ids.begin() + n_test, ids.begin() + n_test + n_valid);
  p.train.assign(ids.begin() + n_test + n_valid, ids.end());
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.test.begin(), p.test.end());
  std::sort(p.valid.begin(), p.valid.end());
  p.reassigned = EnforceCoverage(graph, p.train, p.test);
  p.reassigned += EnforceCoverage(graph, p.train, p.valid);
  std::sort(p.train.begin(), p.train.end());
  return p;
}

SplitPlan MakeFoldSplit(const RatingGraph& graph,
                        std::span<const EdgeId> test_edges,
                        double valid_fraction, uint64_t seed,
                        std::string source) {
  SplitPlan p;
  p.kind = SplitKind::kTransductive;
  p.seed = seed;
  p.num_edges = graph.num_edges();
  p.valid_fraction = valid_fraction;
  p.source = std::move(source);
  std::vector<char> is_test(graph.num_edges(), 0);
  for (EdgeId id : test_edges) {
    if (id < 0 || id >= graph.num_edges()) {
      throw Error(ErrorCode::kUnknownEdgeId, std::to_string(id));
    }
    is_test[id] = 1;
  }
  std::vector<EdgeId> rest;
  for (EdgeId i = 0; i < graph.num_edges(); ++i) {
    if (is_test[i]) {
      p.test.push_back(i);
    } else {
      rest.push_back(i);
    }
  }
  p.test_fraction =
      graph.num_edges() ? static_cast<double>(p.test.size()) / graph.num_edges()
                        : 0.0;
  RngStream rng(seed);
  rng.Shuffle(rest.begin(), rest.end());
  const auto n_valid =
      static_cast<size_t>(std::llround(valid_fraction * rest.size()));
  p.valid.assign(rest.begin(), rest.begin() + n_valid);
  p.train.assign(rest.begin() + n_valid, rest.end());
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.valid.begin(), p.valid.end());
  p.reassigned = EnforceCoverage(graph, p.train, p.valid);
  std::sort(p.train.begin(), p.train.end());
  return p;
}

SplitPlan MakeInductiveSplit(const RatingGraph& graph, Side side,
                             double hold_fraction, double reveal_fraction,
                             uint64_t seed, double valid_fraction) {
  if (!(hold_fraction > 0.0 && hold_fraction < 1.0) ||
      !(reveal_fraction > 0.0 && reveal_fraction < 1.0) ||
      !(valid_fraction >= 0.0 && valid_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "inductive split fractions");
  }
  SplitPlan p;
  p.kind = side == Side::kUser ? SplitKind::kInductiveUsers
                               : SplitKind::kInductiveItems;
  p.seed = seed;
  p.num_edges = graph.num_edges();
  p.hold_fraction = hold_fraction;
  p.reveal_fraction = reveal_fraction;
  p.valid_fraction = valid_fraction;

  // Separate streams keep node choice and train/valid partition independent
  // of reveal_fraction, so one trained model serves every fraction.
  RngStream root(seed);
  RngStream node_rng = root.Fork(1);
  RngStream edge_rng = root.Fork(2);
  RngStream valid_rng = root.Fork(3);

  const int32_t n = graph.num_nodes(side);
  std::vector<int32_t> order(n);
  for (int32_t i = 0; i < n; ++i) order[i] = i;
  node_rng.Shuffle(order.begin(), order.end());
  const auto target = static_cast<size_t>(std::llround(hold_fraction * n));
  for (int32_t node : order) {
    if (p.held_out.size() == target) break;
    if (graph.TotalDegree({side, node}) < 2) {
      p.skipped_degenerate.push_back(node);
      continue;
    }
    p.held_out.push_back(node);
  }
  std::sort(p.held_out.begin(), p.held_out.end());
  std::sort(p.skipped_degenerate.begin(), p.skipped_degenerate.end());

  std::vector<char> held(n, 0);
  for (int32_t node : p.held_out) held[node] = 1;
  for (int32_t node : p.held_out) {
    std::vector<EdgeId> incident;
    for (int r = 0; r < graph.num_levels(); ++r) {
      for (const Neighbor& nb : graph.Neighbors({side, node}, r)) {
        incident.push_back(nb.edge);
      }
    }
    std::sort(incident.begin(), incident.end());
    edge_rng.Shuffle(incident.begin(), incident.end());
    const auto deg = static_cast<long long>(incident.size());
    long long k = std::llround(reveal_fraction * static_cast<double>(deg));
    k = std::clamp(k, 1LL, deg - 1);
    p.revealed.insert(p.revealed.end(), incident.begin(), incident.begin() + k);
    p.test.insert(p.test.end(), incident.begin() + k, incident.end());
  }
  std::vector<EdgeId> rest;
  for (EdgeId id = 0; id < graph.num_edges(); ++id) {
    const Edge& e = graph.edge(id);
    int32_t node = side == Side::kUser ? e.user : e.item;
    if (!held[node]) rest.push_back(id);
  }
  valid_rng.Shuffle(rest.begin(), rest.end());
  const auto n_valid =
      static_cast<size_t>(std::llround(valid_fraction * rest.size()));
  p.valid.assign(rest.begin(), rest.begin() + n_valid);
  p.train.assign(rest.begin() + n_valid, rest.end());
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.valid.begin(), p.valid.end());
  p.reassigned = EnforceCoverage(graph, p.train, p.valid);
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.test.begin(), p.test.end());
  std::sort(p.revealed.begin(), p.revealed.end());
  return p;
}

RatingGraph Subgraph(const RatingGraph& graph, std::span<const EdgeId> ids) {
  std::vector<Rating> triples = EdgesAsRatings(graph, ids);
  return RatingGraph::Build(triples, graph.levels(), graph.num_users(),
                            graph.num_items());
}

std::vector<Rating> EdgesAsRatings(const RatingGraph& graph,
                                   std::span<const EdgeId> ids) {
  std::vector<Rating> out;
  out.reserve(ids.size());
  for (EdgeId id : ids) {
    if (id < 0 || id >= graph.num_edges()) {
      throw Error(ErrorCode::kUnknownEdgeId, std::to_string(id));
    }
    const Edge& e = graph.edge(id);
    out.push_back({e.user, e.item, e.value});
  }
  return out;
}

template <typename T>
double EvaluatePlan(const ModelSpec& spec, ParameterStore<T>& params,
                    const FeatureSet<T>& features, const SplitPlan& plan,
                    const RatingGraph& graph) {
  if (plan.num_edges != graph.num_edges()) {
    throw Error(ErrorCode::kSpecMismatch, "plan was made for another graph");
  }
  std::vector<EdgeId> visible = plan.train;
  visible.insert(visible.end(), plan.revealed.begin(), plan.revealed.end());
  std::sort(visible.begin(), visible.end());
  RatingGraph inference = Subgraph(graph, visible);
  MaskPlan mask;
  if (plan.inductive()) {
    if (plan.held_side() == Side::kUser) {
      mask.masked_users = mask.zeroed_users = plan.held_out;
    } else {
      mask.masked_items = mask.zeroed_items = plan.held_out;
    }
  }
  std::vector<Rating> test = EdgesAsRatings(graph, plan.test);
  EdgeMaskView view(inference);
  std::vector<T> pred = PredictPairs(spec, params, features, view, mask, test);
  std::vector<double> p(pred.begin(), pred.end()), t;
  for (const Rating& r : test) t.push_back(r.value);
  ClampPredictions(p, graph.levels());
  return Rmse(p, t);
}

template double EvaluatePlan<float>(const ModelSpec&, ParameterStore<float>&,
                                    const FeatureSet<float>&, const SplitPlan&,
                                    const RatingGraph&);
template double EvaluatePlan<double>(const ModelSpec&, ParameterStore<double>&,
                                     const FeatureSet<double>&,
                                     const SplitPlan&, const RatingGraph&);

}  // namespace stargcn
