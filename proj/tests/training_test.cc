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

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.h"
#include "stargcn/error.h"
#include "stargcn/evaluation.h"
#include "stargcn/training.h"

namespace stargcn {
namespace {

using testing::Mat;
using testing::RandomGraph;
using testing::RandomMatrix;

ModelSpec TinySpec(int blocks, int layers, bool recon = true) {
  ModelSpec s;
  s.num_blocks = blocks;
  s.layers_per_block = layers;
  s.reconstruction = recon;
  s.embed_dim = 4;
  s.aggregate_dim = 8;
  s.encoder_dim = 6;
  s.projection_dim = 4;
  s.dropout = 0.0;
  s.lambda.assign(blocks, recon ? 0.1 : 0.0);
  return s;
}

TEST_CASE("config presets and validation") {
  TrainConfig t = TrainConfig::Transductive();
  CHECK(t.mask_fraction == 0.1);
  CHECK(t.zero_prob == 0.0);
  TrainConfig i = TrainConfig::Inductive();
  CHECK(i.mask_fraction == 0.4);
  CHECK(i.zero_prob == 1.0);
  CHECK(t.batch_size == 10000);
  CHECK(t.initial_lr == 0.002);
  CHECK(t.min_lr == 0.0005);
  CHECK(t.plateau_window == 100);
  CHECK(t.early_stop_window == 150);
  CHECK(t.grad_clip_norm == 1.0);
  TrainConfig bad = t;
  bad.min_lr = 0.01;
  CHECK_THROWS_AS(bad.Validate(), Error);
  bad = t;
  bad.decay_factor = 1.0;
  CHECK_THROWS_AS(bad.Validate(), Error);
}

TEST_CASE("receptive field is the ball around the seeds") {
  std::vector<Rating> t = {{0, 0, 1}, {1, 0, 2}, {1, 1, 3}, {2, 2, 1}};
  RatingGraph g = RatingGraph::Build(t, RatingLevels::Range(1, 3, 1), 3, 3);
  std::vector<int32_t> seed_u = {0}, none;
  NodeBatch f1 = ReceptiveField(g, seed_u, none, 1);
  CHECK(f1.users == std::vector<int32_t>{0});
  CHECK(f1.items == std::vector<int32_t>{0});
  NodeBatch f3 = ReceptiveField(g, seed_u, none, 3);
  CHECK(f3.users == std::vector<int32_t>{0, 1});
  CHECK(f3.items == std::vector<int32_t>{0, 1});
}

TEST_CASE("sampler examples") {
  RngStream rng(1);
  RatingGraph g = RandomGraph(5, 5, 5, 10, rng);
  TrainConfig cfg = TrainConfig::Transductive();
  cfg.batch_size = 100;
  BatchSampler all(g, cfg, 2);
  BatchSample s = all.Next(rng);
  CHECK(static_cast<int32_t>(s.edge_ids.size()) == g.num_edges());

  cfg.mask_fraction = 0.0;
  BatchSampler nomask(g, cfg, 2);
  CHECK(nomask.Next(rng).mask.empty());
}

TEST_CASE("each edge is sampled with the expected frequency") {
  RngStream rng(2);
  RatingGraph g = RandomGraph(5, 5, 5, 10, rng);
  TrainConfig cfg;
  cfg.batch_size = 5;
  BatchSampler sampler(g, cfg, 1);
  std::vector<int> hits(10, 0);
  const int draws = 100;
  for (int i = 0; i < draws; ++i) {
    BatchSample s = sampler.Next(rng);
    CHECK(s.edge_ids.size() == 5);
    CHECK(std::set<EdgeId>(s.edge_ids.begin(), s.edge_ids.end()).size() == 5);
    for (EdgeId id : s.edge_ids) ++hits[id];
  }
  const double sigma = std::sqrt(draws * 0.25);
  for (int h : hits) CHECK(std::abs(h - draws * 0.5) <= 3 * sigma);
}

TEST_CASE("mask plans stay inside the field") {
  RngStream rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    RatingGraph g = RandomGraph(12, 10, 5, 40, rng);
    TrainConfig cfg = trial % 2 ? TrainConfig::Inductive() : TrainConfig::Transductive();
    cfg.batch_size = 8;
    BatchSampler sampler(g, cfg, 2);
    BatchSample s = sampler.Next(rng);
    for (Side side : {Side::kUser, Side::kItem}) {
      for (int32_t n : s.mask.masked(side)) CHECK(s.field.Local({side, n}) >= 0);
      for (int32_t n : s.mask.zeroed(side)) {
        CHECK(std::binary_search(s.mask.masked(side).begin(), s.mask.masked(side).end(), n));
      }
      if (cfg.zero_prob == 1.0) CHECK(s.mask.zeroed(side) == s.mask.masked(side));
      if (cfg.zero_prob == 0.0) CHECK(s.mask.zeroed(side).empty());
    }
    for (EdgeId id : s.edge_ids) {
      CHECK(s.field.Local({Side::kUser, g.edge(id).user}) >= 0);
      CHECK(s.field.Local({Side::kItem, g.edge(id).item}) >= 0);
    }
  }
}

TEST_CASE("rating loss examples") {
  std::vector<double> a = {2, 4}, b = {3, 4};
  CHECK(RatingLoss(b, b) == 0.0);
  CHECK(RatingLoss(a, b) == doctest::Approx(0.5));
  RngStream rng(4);
  std::vector<double> p(100), t(100);
  double s = 0;
  for (int i = 0; i < 100; ++i) {
    p[i] = rng.Normal();
    t[i] = rng.Normal();
    s += (p[i] - t[i]) * (p[i] - t[i]);
  }
  CHECK(RatingLoss(p, t) == doctest::Approx(s / 100).epsilon(1e-12));
  CHECK_THROWS_AS(RatingLoss({}, {}), Error);
}

TEST_CASE("reconstruction loss examples") {
  Mat xu = Mat::Zero(2, 2), xi = Mat::Zero(1, 2);
  xu(0, 0) = 1.0;
  MaskPlan plan;
  plan.masked_users = {0};
  CHECK(ReconstructionLoss<double>(xu, Mat::Zero(2, 2), xi, xi, plan) == doctest::Approx(0.5));
  CHECK(ReconstructionLoss<double>(xu, xu, xi, xi, plan) == 0.0);
  CHECK(ReconstructionLoss<double>(xu, Mat::Zero(2, 2), xi, xi, MaskPlan{}) == 0.0);

  RngStream rng(5);
  Mat a = RandomMatrix(6, 3, rng), ah = RandomMatrix(6, 3, rng);
  Mat b = RandomMatrix(5, 3, rng), bh = RandomMatrix(5, 3, rng);
  MaskPlan p2;
  p2.masked_users = {1, 4, 5};
  p2.masked_items = {0, 2};
  double expect = 0;
  for (int32_t u : p2.masked_users) {
    for (int k = 0; k < 3; ++k) expect += (a(u, k) - ah(u, k)) * (a(u, k) - ah(u, k)) / 6.0;
  }
  for (int32_t v : p2.masked_items) {
    for (int k = 0; k < 3; ++k) expect += (b(v, k) - bh(v, k)) * (b(v, k) - bh(v, k)) / 4.0;
  }
  CHECK(ReconstructionLoss<double>(a, ah, b, bh, p2) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gradient clipping") {
  std::vector<Parameter<double>> ps(1);
  ps[0].value = Mat::Zero(1, 2);
  ps[0].grad = Mat::Zero(1, 2);
  ps[0].grad << 0.3, 0.4;
  CHECK(ClipGradients(ps, 1.0) == 1.0);
  CHECK(ps[0].grad(0, 0) == 0.3);
  ps[0].grad << 3, 4;
  CHECK(ClipGradients(ps, 1.0) == doctest::Approx(0.2));
  CHECK(ps[0].grad(0, 0) == doctest::Approx(0.6));
  CHECK(ps[0].grad(0, 1) == doctest::Approx(0.8));

  RngStream rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Parameter<double>> many(4);
    for (auto& p : many) {
      p.value = RandomMatrix(3, 3, rng);
      p.grad = RandomMatrix(3, 3, rng, 5.0);
    }
    ClipGradients(many, 1.0);
    CHECK(GlobalGradNorm(many) <= 1.0 + 1e-12);
  }
}

TEST_CASE("adam update") {
  TrainConfig cfg;
  std::vector<Parameter<double>> ps(1);
  ps[0].value = Mat::Constant(1, 2, 1.5);
  ps[0].grad = Mat::Zero(1, 2);
  ParameterStore<double> store;
  store.params = ps;
  AdamState<double> st = AdamState<double>::ForParams(store);
  AdamUpdate(ps, st, 0.1, cfg);
  CHECK(ps[0].value == Mat::Constant(1, 2, 1.5));

  ps[0].grad << 2.0, -0.5;
  AdamState<double> st2 = AdamState<double>::ForParams(store);
  AdamUpdate(ps, st2, 0.1, cfg);
  // First bias-corrected step moves each entry by lr * g / (|g| + eps).
  CHECK(ps[0].value(0, 0) == doctest::Approx(1.5 - 0.1 * 2.0 / (2.0 + 1e-8)));
  CHECK(ps[0].value(0, 1) == doctest::Approx(1.5 + 0.1 * 0.5 / (0.5 + 1e-8)));
}

struct Fixture {
  RngStream rng{7};
  RatingGraph graph = testing::CoveredGraph(8, 8, 5, 20, rng);
  FeatureSet<double> none;
};

TEST_CASE("loss decomposes into per-block terms") {
  Fixture fx;
  ModelSpec spec = TinySpec(2, 1);
  spec.lambda = {0.3, 0.7};
  auto params = InitParameters<double>(spec, fx.rng, 8, 8);
  TrainConfig cfg = TrainConfig::Inductive();
  cfg.batch_size = 6;
  BatchSampler sampler(fx.graph, cfg, spec.total_layers());
  BatchSample s = sampler.Next(fx.rng);
  StepResult r = ComputeLoss(params, spec, fx.none, fx.graph, s, cfg, fx.rng,
                             false, false);

  // Independent recomputation from forward values.
  EdgeMaskView view = MaskEdges(fx.graph, s.edge_ids);
  NodeBatch all = NodeBatch::All(8, 8);
  LocalAdjacency<double> adj = BuildLocalAdjacency<double>(view, s.field, true);
  ForwardContext<double> ctx;
  ctx.spec = &spec;
  ctx.params = &params;
  ctx.features = &fx.none;
  ctx.batch = &s.field;
  ctx.adjacency = &adj;
  std::vector<LocalPair> pairs;
  std::vector<double> truth;
  for (EdgeId id : s.edge_ids) {
    pairs.push_back({s.field.Local({Side::kUser, fx.graph.edge(id).user}),
                     s.field.Local({Side::kItem, fx.graph.edge(id).item})});
    truth.push_back(fx.graph.edge(id).value);
  }
  Tape<double> t;
  ForwardVars fv = ForwardAllBlocks(t, ctx, s.mask, pairs);
  // Recon loss uses local rows; map the plan.
  MaskPlan local;
  for (int32_t u : s.mask.masked_users) local.masked_users.push_back(s.field.Local({Side::kUser, u}));
  for (int32_t v : s.mask.masked_items) local.masked_items.push_back(s.field.Local({Side::kItem, v}));
  double total = 0;
  const Mat& table = params[params.embedding].value;
  Mat clean_u(s.field.users.size(), 4), clean_i(s.field.items.size(), 4);
  for (size_t k = 0; k < s.field.users.size(); ++k) clean_u.row(k) = table.row(s.field.users[k]);
  for (size_t k = 0; k < s.field.items.size(); ++k) clean_i.row(k) = table.row(8 + s.field.items[k]);
  for (int b = 0; b < 2; ++b) {
    const Mat& pred = t.value(fv.blocks[b].prediction);
    std::vector<double> p(pred.data(), pred.data() + pred.size());
    double lt = RatingLoss(p, truth);
    // Targets are the clean table rows even for zeroed nodes.
    double lr = ReconstructionLoss<double>(clean_u, t.value(fv.blocks[b].recon[0]),
                                           clean_i, t.value(fv.blocks[b].recon[1]), local);
    CHECK(r.rating_loss[b] == doctest::Approx(lt).epsilon(1e-12));
    CHECK(r.recon_loss[b] == doctest::Approx(lr).epsilon(1e-12));
    total += lt + spec.lambda[b] * lr;
  }
  CHECK(std::abs(r.total - total) < 1e-12);
  CHECK(s.mask.zeroed_items.size() + s.mask.zeroed_users.size() > 0);
}

TEST_CASE("zero lambda and no mask reduce to the rating loss") {
  Fixture fx;
  ModelSpec spec = TinySpec(1, 1);
  spec.lambda = {0.0};
  auto params = InitParameters<double>(spec, fx.rng, 8, 8);
  TrainConfig cfg;
  cfg.mask_fraction = 0.0;
  cfg.batch_size = 5;
  BatchSampler sampler(fx.graph, cfg, 1);
  BatchSample s = sampler.Next(fx.rng);
  StepResult r = ComputeLoss(params, spec, fx.none, fx.graph, s, cfg, fx.rng, false, false);
  CHECK(r.total == r.rating_loss[0]);
}

TEST_CASE("sampled edges are never visible with removal on") {
  Fixture fx;
  ModelSpec spec = TinySpec(2, 1);
  auto params = InitParameters<double>(spec, fx.rng, 8, 8);
  for (bool remove : {true, false}) {
    TrainConfig cfg = TrainConfig::Transductive();
    cfg.batch_size = 6;
    cfg.remove_sampled_edges = remove;
    BatchSampler sampler(fx.graph, cfg, spec.total_layers());
    AdamState<double> adam = AdamState<double>::ForParams(params);
    std::set<EdgeId> batch;
    int leaks = 0;
    TrainHooks hooks;
    hooks.on_batch = [&](const BatchSample& s) {
      batch = std::set<EdgeId>(s.edge_ids.begin(), s.edge_ids.end());
    };
    hooks.on_visible_edge = [&](EdgeId id) { leaks += batch.count(id); };
    for (int it = 0; it < 20; ++it) {
      TrainStep(params, spec, fx.none, fx.graph, sampler.Next(fx.rng), cfg, adam,
                0.001, fx.rng, &hooks);
    }
    if (remove) {
      CHECK(leaks == 0);
    } else {
      CHECK(leaks > 0);
    }
  }
}

TEST_CASE("a small step lowers the training loss") {
  int decreased = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(100 + seed);
    RatingGraph g = testing::CoveredGraph(3, 3, 5, 1, rng);
    ModelSpec spec = TinySpec(1, 1);
    auto params = InitParameters<double>(spec, rng, 3, 3);
    TrainConfig cfg;
    cfg.mask_fraction = 0.0;
    cfg.batch_size = 100;
    cfg.remove_sampled_edges = false;
    BatchSampler sampler(g, cfg, 1);
    BatchSample s = sampler.Next(rng);
    FeatureSet<double> none;
    RngStream r0(1);
    double before = ComputeLoss(params, spec, none, g, s, cfg, r0, false, false).total;
    AdamState<double> adam = AdamState<double>::ForParams(params);
    TrainStep(params, spec, none, g, s, cfg, adam, 1e-3, rng);
    double after = ComputeLoss(params, spec, none, g, s, cfg, r0, false, false).total;
    decreased += after < before;
  }
  CHECK(decreased >= 9);
}

TEST_CASE("divergent parameters raise NonFiniteLoss") {
  Fixture fx;
  ModelSpec spec = TinySpec(1, 1);
  auto params = InitParameters<double>(spec, fx.rng, 8, 8);
  params[params.embedding].value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.batch_size = 1000;
  cfg.remove_sampled_edges = false;
  BatchSampler sampler(fx.graph, cfg, 1);
  AdamState<double> adam = AdamState<double>::ForParams(params);
  try {
    TrainStep(params, spec, fx.none, fx.graph, sampler.Next(fx.rng), cfg, adam, 0.001, fx.rng);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteLoss);
  }
}

TEST_CASE("zero iterations return the initial parameters") {
  Fixture fx;
  ModelSpec spec = TinySpec(1, 1);
  auto params = InitParameters<double>(spec, fx.rng, 8, 8);
  TrainConfig cfg;
  cfg.max_iterations = 0;
  auto res = RunTraining<double>(params, spec, fx.none, fx.graph,
                                 [](ParameterStore<double>&) { return 1.0; }, cfg);
  CHECK(res.best.SameValues(params));
  CHECK(res.log.empty());
}

TEST_CASE("constant validation halves the rate after the window and stops") {
  Fixture fx;
  ModelSpec spec = TinySpec(1, 1);
  auto params = InitParameters<double>(spec, fx.rng, 8, 8);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_iterations = 1000;
  cfg.valid_every = 10;
  auto res = RunTraining<double>(params, spec, fx.none, fx.graph,
                                 [](ParameterStore<double>&) { return 1.0; }, cfg);
  CHECK(res.early_stopped);
  CHECK(res.iterations_run == cfg.early_stop_window);
  CHECK(res.best_iteration == 0);
  for (const TrainingRecord& rec : res.log) {
    CHECK(rec.lr == (rec.iteration <= cfg.plateau_window ? 0.002 : 0.001));
  }
  CHECK(res.log.back().iteration == 150);
}

TEST_CASE("improvements reset the plateau; the rate never drops below the floor") {
  Fixture fx;
  ModelSpec spec = TinySpec(1, 1);
  auto params = InitParameters<double>(spec, fx.rng, 8, 8);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_iterations = 2000;
  cfg.early_stop_window = 100000;
  // One improvement at iteration 50, then flat.
  int calls = 0;
  auto res = RunTraining<double>(params, spec, fx.none, fx.graph,
                                 [&](ParameterStore<double>&) {
                                   return calls++ == 5 ? 0.5 : 1.0;
                                 }, cfg);
  CHECK(res.best_iteration == 50);
  for (const TrainingRecord& rec : res.log) {
    if (rec.iteration <= 150) CHECK(rec.lr == 0.002);
    if (rec.iteration > 150 && rec.iteration <= 250) CHECK(rec.lr == 0.001);
    CHECK(rec.lr >= cfg.min_lr);
  }
  CHECK(res.log.back().lr == cfg.min_lr);
}

TEST_CASE("log records serialize with fixed field names") {
  TrainingRecord r;
  r.iteration = 10;
  r.rating_loss = {1.0, 0.5};
  r.recon_loss = {0.25, 0.0};
  r.valid_rmse = 0.9;
  r.lr = 0.002;
  CHECK(r.ToJson() ==
        R"({"iteration":10,"rating_loss":[1.0,0.5],"recon_loss":[0.25,0.0],"valid_rmse":0.9,"lr":0.002})");
}

TEST_CASE("identical config and seed give identical logs") {
  auto run = [] {
    Fixture fx;
    ModelSpec spec = TinySpec(2, 1);
    spec.dropout = 0.5;
    RngStream init(3);
    auto params = InitParameters<double>(spec, init, 8, 8);
    TrainConfig cfg = TrainConfig::Inductive();
    cfg.batch_size = 6;
    cfg.max_iterations = 60;
    std::vector<Rating> valid = {{0, 0, 3}, {1, 2, 4}};
    auto v = MakeValidator<double>(spec, fx.none, fx.graph, valid);
    auto res = RunTraining<double>(params, spec, fx.none, fx.graph, v, cfg);
    std::string log;
    for (const auto& r : res.log) log += r.ToJson() + "\n";
    return std::pair{log, res.best};
  };
  auto [a, pa] = run();
  auto [b, pb] = run();
  CHECK(a == b);
  CHECK(pa.SameValues(pb));
}

TEST_CASE("rank-one ratings are fit closely") {
  RngStream rng(8);
  RatingGraph g = testing::RankOneGraph(20, rng);
  ModelSpec spec = testing::RankOneSpec();
  auto params = InitParameters<double>(spec, rng, 20, 20);
  TrainConfig cfg = testing::RankOneConfig();
  FeatureSet<double> none;
  std::vector<EdgeId> ids(g.num_edges());
  for (EdgeId i = 0; i < g.num_edges(); ++i) ids[i] = i;
  std::vector<Rating> triples = EdgesAsRatings(g, ids);
  auto v = MakeValidator<double>(spec, none, g, triples);
  auto res = RunTraining<double>(params, spec, none, g, v, cfg);
  CHECK(res.best_valid_rmse < 0.1);
  CHECK(res.iterations_run <= 2000);
}

}  // namespace
}  // namespace stargcn
