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

#include "stargcn/cli.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "stargcn/checkpoint.h"
#include "stargcn/error.h"
#include "stargcn/rng.h"

namespace stargcn {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

const char* VariantLabel(const std::string& v) {
  if (v == "1b2l-rec-rm") return "1b2l (-rec, -rm)";
  if (v == "1b2l-rec") return "1b2l (-rec)";
  if (v == "1b2l") return "1b2l";
  if (v == "2b1l-recurrent") return "2b1l (recurrent)";
  if (v == "2b1l") return "2b1l";
  return "?";
}

ordered_json DescriptorToJson(const DatasetDescriptor& d) {
  auto opt = [](const std::optional<int64_t>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
  };
  return {{"name", d.name},
          {"data_dir", d.data_dir},
          {"rating_path", d.rating_path},
          {"delimiter", d.delimiter},
          {"scale", d.scale.values()},
          {"expected_users", opt(d.expected_users)},
          {"expected_items", opt(d.expected_items)},
          {"expected_ratings", opt(d.expected_ratings)},
          {"user_feature_path", d.user_feature_path},
          {"item_feature_path", d.item_feature_path},
          {"large", d.large}};
}

DatasetDescriptor DescriptorFromJson(const ordered_json& j) {
  auto opt = [&](const char* key) -> std::optional<int64_t> {
    if (j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<int64_t>();
  };
  DatasetDescriptor d;
  d.name = j.at("name");
  d.data_dir = j.at("data_dir");
  d.rating_path = j.at("rating_path");
  d.delimiter = j.at("delimiter");
  auto scale = j.at("scale").get<std::vector<double>>();
  if (!scale.empty()) d.scale = RatingLevels(scale);
  d.expected_users = opt("expected_users");
  d.expected_items = opt("expected_items");
  d.expected_ratings = opt("expected_ratings");
  d.user_feature_path = j.at("user_feature_path");
  d.item_feature_path = j.at("item_feature_path");
  d.large = j.at("large");
  return d;
}

ordered_json SpecToJson(const ModelSpec& s) {
  return {{"num_blocks", s.num_blocks},
          {"layers_per_block", s.layers_per_block},
          {"combine", s.combine == Combine::kStacked ? "stacked" : "recurrent"},
          {"reconstruction", s.reconstruction},
          {"embed_dim", s.embed_dim},
          {"feature_dim", s.feature_dim},
          {"user_feature_in", s.user_feature_in},
          {"item_feature_in", s.item_feature_in},
          {"aggregate_dim", s.aggregate_dim},
          {"encoder_dim", s.encoder_dim},
          {"projection_dim", s.projection_dim},
          {"num_levels", s.num_levels},
          {"dropout", s.dropout},
          {"leaky_slope", s.leaky_slope},
          {"lambda", s.lambda},
          {"effective_degrees", s.effective_degrees}};
}

ModelSpec SpecFromJson(const ordered_json& j) {
  ModelSpec s;
  s.num_blocks = j.at("num_blocks");
  s.layers_per_block = j.at("layers_per_block");
  s.combine = j.at("combine") == "stacked" ? Combine::kStacked
                                           : Combine::kRecurrent;
  s.reconstruction = j.at("reconstruction");
  s.embed_dim = j.at("embed_dim");
  s.feature_dim = j.at("feature_dim");
  s.user_feature_in = j.at("user_feature_in");
  s.item_feature_in = j.at("item_feature_in");
  s.aggregate_dim = j.at("aggregate_dim");
  s.encoder_dim = j.at("encoder_dim");
  s.projection_dim = j.at("projection_dim");
  s.num_levels = j.at("num_levels");
  s.dropout = j.at("dropout");
  s.leaky_slope = j.at("leaky_slope");
  s.lambda = j.at("lambda").get<std::vector<double>>();
  s.effective_degrees = j.at("effective_degrees");
  return s;
}

ordered_json ConfigToJson(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"mask_fraction", c.mask_fraction},
          {"zero_prob", c.zero_prob},
          {"initial_lr", c.initial_lr},
          {"min_lr", c.min_lr},
          {"decay_factor", c.decay_factor},
          {"plateau_window", c.plateau_window},
          {"early_stop_window", c.early_stop_window},
          {"grad_clip_norm", c.grad_clip_norm},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"max_iterations", c.max_iterations},
          {"valid_every", c.valid_every},
          {"seed", c.seed},
          {"remove_sampled_edges", c.remove_sampled_edges}};
}

TrainConfig ConfigFromJson(const ordered_json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size");
  c.mask_fraction = j.at("mask_fraction");
  c.zero_prob = j.at("zero_prob");
  c.initial_lr = j.at("initial_lr");
  c.min_lr = j.at("min_lr");
  c.decay_factor = j.at("decay_factor");
  c.plateau_window = j.at("plateau_window");
  c.early_stop_window = j.at("early_stop_window");
  c.grad_clip_norm = j.at("grad_clip_norm");
  c.adam_beta1 = j.at("adam_beta1");
  c.adam_beta2 = j.at("adam_beta2");
  c.adam_eps = j.at("adam_eps");
  c.max_iterations = j.at("max_iterations");
  c.valid_every = j.at("valid_every");
  c.seed = j.at("seed");
  c.remove_sampled_edges = j.at("remove_sampled_edges");
  return c;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
}

// Rows used for feature statistics: everything except held-out nodes.
std::vector<int32_t> StatRows(int32_t n, Side side, const SplitPlan& plan) {
  std::vector<char> held(n, 0);
  if (plan.inductive() && plan.held_side() == side) {
    for (int32_t v : plan.held_out) held[v] = 1;
  }
  std::vector<int32_t> rows;
  for (int32_t i = 0; i < n; ++i) {
    if (!held[i]) rows.push_back(i);
  }
  return rows;
}

struct NormalizedFeatures {
  std::optional<FeatureMatrix> users;
  std::optional<FeatureMatrix> items;
};

NormalizedFeatures PrepareFeatures(const ModelSpec& spec,
                                   const LoadedDataset& ds,
                                   const SplitPlan& plan) {
  NormalizedFeatures nf;
  if (spec.feature_dim == 0) return nf;
  auto prep = [&](Side side, const std::optional<FeatureMatrix>& raw,
                  std::optional<FeatureMatrix>& out) {
    const int expected = spec.feature_in(side);
    if (expected == 0) return;
    if (!raw || raw->dim() != expected) {
      throw Error(ErrorCode::kMissingFeatures,
                  std::string(side == Side::kUser ? "user" : "item") +
                      " features of width " + std::to_string(expected) +
                      " are required");
    }
    auto rows = StatRows(raw->num_rows(), side, plan);
    out = NormalizeFeatures(*raw, Normalization::kZScore, rows);
  };
  prep(Side::kUser, ds.user_features, nf.users);
  prep(Side::kItem, ds.item_features, nf.items);
  return nf;
}

template <typename T>
struct TypedFeatures {
  Matrix<T> users;
  Matrix<T> items;
  FeatureSet<T> set;

  explicit TypedFeatures(const NormalizedFeatures& nf) {
    if (nf.users) {
      users = CastFeatures<T>(*nf.users);
      set.users = &users;
    }
    if (nf.items) {
      items = CastFeatures<T>(*nf.items);
      set.items = &items;
    }
  }
  TypedFeatures(const TypedFeatures&) = delete;
};

template <typename T>
ExperimentResult RunTyped(const RunManifest& manifest, const LoadedDataset& ds,
                          std::span<const SplitPlan> plans,
                          std::ostream* progress) {
  const SplitPlan& base = plans[0];
  for (const SplitPlan& p : plans) {
    if (p.train != base.train || p.valid != base.valid) {
      throw Error(ErrorCode::kInvalidArgument,
                  "evaluated plans must share the training partition");
    }
  }
  RatingGraph train_graph = Subgraph(ds.graph, base.train);
  std::vector<Rating> valid = EdgesAsRatings(ds.graph, base.valid);
  TypedFeatures<T> feats(PrepareFeatures(manifest.spec, ds, base));

  ExperimentResult result;
  const bool write = !manifest.output_dir.empty();
  if (write) {
    fs::create_directories(manifest.output_dir);
    manifest.Save((fs::path(manifest.output_dir) / "manifest.json").string());
  }
  for (uint64_t seed : manifest.seeds) {
    TrainConfig config = manifest.train;
    config.seed = seed;
    RngStream init_rng = RngStream(seed).Fork(kInitStreamTag);
    ParameterStore<T> params = InitParameters<T>(
        manifest.spec, init_rng, ds.graph.num_users(), ds.graph.num_items());
    Validator<T> validator =
        valid.empty() ? Validator<T>([](ParameterStore<T>&) { return 0.0; })
                      : MakeValidator<T>(manifest.spec, feats.set, train_graph,
                                         valid);
    TrainingResult<T> tr = RunTraining<T>(std::move(params), manifest.spec,
                                          feats.set, train_graph, validator,
                                          config);
    SeedOutcome so;
    so.seed = seed;
    so.valid_rmse = tr.best_valid_rmse;
    so.best_iteration = tr.best_iteration;
    so.iterations = tr.iterations_run;
    so.early_stopped = tr.early_stopped;
    for (const SplitPlan& p : plans) {
      so.test_rmse.push_back(p.test.empty()
                                 ? std::numeric_limits<double>::quiet_NaN()
                                 : EvaluatePlan<T>(manifest.spec, tr.best,
                                                   feats.set, p, ds.graph));
    }
    if (write) {
      fs::path dir = fs::path(manifest.output_dir) / ("seed-" + std::to_string(seed));
      fs::create_directories(dir);
      Checkpoint<T> ckpt{manifest.spec, ds.graph.num_users(),
                         ds.graph.num_items(), tr.rng, tr.best};
      SaveCheckpoint<T>((dir / "checkpoint.bin").string(), ckpt);
      std::string log;
      for (const TrainingRecord& rec : tr.log) log += rec.ToJson() + "\n";
      WriteText(dir / "log.jsonl", log);
      ordered_json rj = {{"seed", seed},
                         {"valid_rmse", so.valid_rmse},
                         {"test_rmse", so.test_rmse},
                         {"best_iteration", so.best_iteration},
                         {"iterations", so.iterations},
                         {"early_stopped", so.early_stopped}};
      WriteText(dir / "result.json", rj.dump(2) + "\n");
    }
    if (progress) {
      *progress << "seed " << seed << ": valid " << std::fixed
                << std::setprecision(4) << so.valid_rmse << " test";
      for (double t : so.test_rmse) *progress << ' ' << t;
      *progress << " (best it " << so.best_iteration << " of "
                << so.iterations << ")\n"
                << std::defaultfloat;
      progress->flush();
    }
    result.seeds.push_back(std::move(so));
  }
  for (size_t p = 0; p < plans.size(); ++p) {
    std::vector<double> v;
    for (const SeedOutcome& so : result.seeds) v.push_back(so.test_rmse[p]);
    result.test.push_back(v.empty() ? MeanStd{} : Summarize(v));
  }
  if (write) {
    WriteText(fs::path(manifest.output_dir) / "results.json",
              result.ToJson().dump(2) + "\n");
  }
  return result;
}

// Split defaults: the provided fold for MovieLens-100K, otherwise a random
// edge split.
SplitPlan MakePlan(const LoadedDataset& ds, const std::string& protocol,
                   int fold, double test_fraction, double valid_fraction,
                   double hold, double reveal, uint64_t seed) {
  if (protocol == "transductive") {
    if (fold > 0) {
      fs::path dir = fs::path(ds.descriptor.rating_path).parent_path();
      std::string path = (dir / ("u" + std::to_string(fold) + ".test")).string();
      auto test = LoadFoldEdges(path, ds.descriptor.delimiter, ds.data, ds.graph);
      return MakeFoldSplit(ds.graph, test, valid_fraction, seed,
                           "fold-" + std::to_string(fold));
    }
    return MakeTransductiveSplit(ds.graph, test_fraction, valid_fraction, seed);
  }
  if (protocol == "inductive-items" || protocol == "inductive-users") {
    Side side = protocol == "inductive-items" ? Side::kItem : Side::kUser;
    return MakeInductiveSplit(ds.graph, side, hold, reveal, seed, valid_fraction);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown protocol " + protocol);
}

void AttachFeatures(ModelSpec& spec, const LoadedDataset& ds, bool use) {
  spec.feature_dim = 0;
  spec.user_feature_in = spec.item_feature_in = 0;
  if (!use) return;
  spec.user_feature_in = ds.user_features ? ds.user_features->dim() : 0;
  spec.item_feature_in = ds.item_features ? ds.item_features->dim() : 0;
  if (spec.user_feature_in == 0 && spec.item_feature_in == 0) {
    throw Error(ErrorCode::kMissingFeatures,
                "dataset " + ds.descriptor.name + " has no side features");
  }
  spec.feature_dim = ds.descriptor.large ? 32 : 8;
}

struct Options {
  std::vector<std::string> datasets{"ml-100k"};
  std::string data_dir = "data";
  std::string ratings;
  std::string delimiter = "\t";
  std::string preset = "2b1l";
  std::vector<std::string> variants;
  std::string features = "none";
  std::string plan;
  std::string manifest;
  std::vector<std::string> checkpoints;
  std::vector<uint64_t> seeds{0};
  std::string out;
  std::string precision = "f64";
  bool deterministic = false;
  int max_iterations = -1;
  std::string protocol = "transductive";
  int fold = 0;
  double test_fraction = 0.1;
  double valid_fraction = 0.05;
  double hold = 0.2;
  double reveal = 0.5;
};

DatasetDescriptor ResolveDataset(const Options& o, const std::string& name) {
  if (!o.ratings.empty()) {
    DatasetDescriptor d;
    d.name = name;
    d.rating_path = o.ratings;
    d.delimiter = o.delimiter;
    d.data_dir = o.data_dir;
    return d;
  }
  return DatasetPreset(name, o.data_dir);
}

FeatureMode ParseFeatureMode(const std::string& s) {
  return s == "none" ? FeatureMode::kNone : FeatureMode::kAuto;
}

SplitPlan PlanFor(const Options& o, const LoadedDataset& ds, uint64_t seed) {
  if (!o.plan.empty()) return SplitPlan::Load(o.plan);
  return MakePlan(ds, o.protocol, o.fold, o.test_fraction, o.valid_fraction,
                  o.hold, o.reveal, seed);
}

void PrintPlanSummary(const SplitPlan& p, std::ostream& out) {
  out << "kind " << SplitKindName(p.kind) << " source " << p.source
      << "\ntrain " << p.train.size() << "\nvalid " << p.valid.size()
      << "\ntest " << p.test.size() << "\nrevealed " << p.revealed.size()
      << "\nheld_out " << p.held_out.size() << "\nreassigned " << p.reassigned
      << "\nskipped " << p.skipped_degenerate.size() << "\n";
}

int CmdSplit(const Options& o, std::ostream& out) {
  DatasetDescriptor d = ResolveDataset(o, o.datasets.at(0));
  LoadedDataset ds = LoadDataset(d, FeatureMode::kNone);
  SplitPlan plan = MakePlan(ds, o.protocol, o.fold, o.test_fraction,
                            o.valid_fraction, o.hold, o.reveal, o.seeds.at(0));
  if (o.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
  if (fs::path(o.out).has_parent_path()) {
    fs::create_directories(fs::path(o.out).parent_path());
  }
  plan.Save(o.out);
  PrintPlanSummary(plan, out);
  return 0;
}

RunManifest ManifestFor(const Options& o, const LoadedDataset& ds,
                        const std::string& preset, bool use_features,
                        const SplitPlan& plan) {
  RunManifest m;
  m.dataset = ds.descriptor;
  m.preset = preset;
  m.use_features = use_features;
  ApplyPreset(preset, ds.descriptor, plan.inductive(), m.spec, m.train);
  m.spec.num_levels = ds.graph.num_levels();
  AttachFeatures(m.spec, ds, use_features);
  if (o.max_iterations >= 0) m.train.max_iterations = o.max_iterations;
  m.seeds = o.seeds;
  m.precision = o.precision;
  m.deterministic = o.deterministic;
  m.output_dir = o.out;
  return m;
}

ExperimentResult RunFromManifest(RunManifest& m, const LoadedDataset& ds,
                                 const SplitPlan& plan, std::ostream& out) {
  std::vector<SplitPlan> plans{plan};
  return RunExperiment(m, ds, plans, &out);
}

int CmdTrain(const Options& o, std::ostream& out) {
  RunManifest m;
  LoadedDataset ds;
  SplitPlan plan;
  if (!o.manifest.empty()) {
    m = RunManifest::Load(o.manifest);
    if (!o.out.empty()) m.output_dir = o.out;
    ds = LoadDataset(m.dataset, m.use_features ? FeatureMode::kAuto
                                               : FeatureMode::kNone);
    plan = SplitPlan::Load(m.plan_path);
  } else {
    if (o.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
    DatasetDescriptor d = ResolveDataset(o, o.datasets.at(0));
    const bool use = o.features != "none";
    ds = LoadDataset(d, use ? FeatureMode::kAuto : FeatureMode::kNone);
    plan = PlanFor(o, ds, o.seeds.at(0));
    m = ManifestFor(o, ds, o.preset, use, plan);
    fs::create_directories(o.out);
    if (o.plan.empty()) {
      m.plan_path = fs::absolute(fs::path(o.out) / "plan.txt").string();
      plan.Save(m.plan_path);
    } else {
      m.plan_path = fs::absolute(o.plan).string();
    }
  }
  if (plan.num_edges != ds.graph.num_edges()) {
    throw Error(ErrorCode::kSpecMismatch, "plan does not match the dataset");
  }
  try {
    ExperimentResult r = RunFromManifest(m, ds, plan, out);
    out << "test rmse " << std::fixed << std::setprecision(4) << r.test[0].mean
        << " +- " << r.test[0].stddev << "\n" << std::defaultfloat;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNonFiniteLoss && !m.output_dir.empty()) {
      WriteText(fs::path(m.output_dir) / "nonfinite.txt",
                std::string(e.what()) + "\n");
    }
    throw;
  }
  return 0;
}

template <typename T>
double EvalCheckpoint(const std::string& path, const LoadedDataset& ds,
                      const SplitPlan& plan) {
  Checkpoint<T> ckpt = LoadCheckpoint<T>(path);
  if (ckpt.num_users != ds.graph.num_users() ||
      ckpt.num_items != ds.graph.num_items()) {
    throw Error(ErrorCode::kSpecMismatch,
                path + ": checkpoint node counts differ from the plan's graph");
  }
  TypedFeatures<T> feats(PrepareFeatures(ckpt.spec, ds, plan));
  return EvaluatePlan<T>(ckpt.spec, ckpt.params, feats.set, plan, ds.graph);
}

int CmdEval(const Options& o, std::ostream& out) {
  if (o.checkpoints.empty() || o.plan.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--checkpoint and --plan are required");
  }
  DatasetDescriptor d = ResolveDataset(o, o.datasets.at(0));
  LoadedDataset ds = LoadDataset(d, ParseFeatureMode(o.features));
  SplitPlan plan = SplitPlan::Load(o.plan);
  if (plan.num_edges != ds.graph.num_edges()) {
    throw Error(ErrorCode::kSpecMismatch, "plan does not match the dataset");
  }
  std::vector<double> values;
  ordered_json records = ordered_json::array();
  for (const std::string& path : o.checkpoints) {
    double rmse = CheckpointScalarBytes(path) == 4
                      ? EvalCheckpoint<float>(path, ds, plan)
                      : EvalCheckpoint<double>(path, ds, plan);
    values.push_back(rmse);
    records.push_back({{"checkpoint", path}, {"rmse", rmse}});
    out << path << " " << std::fixed << std::setprecision(4) << rmse << "\n"
        << std::defaultfloat;
  }
  MeanStd s = Summarize(values);
  out << "mean " << std::fixed << std::setprecision(4) << s.mean << " stddev "
      << s.stddev << "\n" << std::defaultfloat;
  if (!o.out.empty()) {
    ordered_json j = {{"plan", o.plan},
                      {"runs", records},
                      {"mean", s.mean},
                      {"stddev", s.stddev}};
    if (fs::path(o.out).has_parent_path()) {
      fs::create_directories(fs::path(o.out).parent_path());
    }
    WriteText(o.out, j.dump(2) + "\n");
  }
  return 0;
}

int CmdAblate(const Options& o, std::ostream& out) {
  AblationTable table;
  table.datasets = o.datasets;
  table.variants = o.variants.empty() ? VariantNames() : o.variants;
  std::vector<bool> groups;
  if (o.features == "none" || o.features == "both") groups.push_back(false);
  if (o.features == "auto" || o.features == "both") groups.push_back(true);
  for (bool g : groups) table.groups.push_back(g ? "With Fea." : "Emb. only");
  const MeanStd missing{std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN()};
  table.cells.assign(groups.size(),
                     std::vector<std::vector<MeanStd>>(
                         table.variants.size(),
                         std::vector<MeanStd>(table.datasets.size(), missing)));
  for (size_t di = 0; di < table.datasets.size(); ++di) {
    DatasetDescriptor d = ResolveDataset(o, table.datasets[di]);
    LoadedDataset ds = LoadDataset(d, ParseFeatureMode(o.features));
    SplitPlan plan = PlanFor(o, ds, o.seeds.at(0));
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      for (size_t vi = 0; vi < table.variants.size(); ++vi) {
        RunManifest m = ManifestFor(o, ds, table.variants[vi], groups[gi], plan);
        if (!o.out.empty()) {
          fs::path dir = fs::path(o.out) / table.datasets[di] /
                         (groups[gi] ? "features" : "embedding") /
                         table.variants[vi];
          fs::create_directories(dir);
          m.output_dir = dir.string();
          m.plan_path = fs::absolute(dir / "plan.txt").string();
          plan.Save(m.plan_path);
        }
        out << table.datasets[di] << " " << table.groups[gi] << " "
            << VariantLabel(table.variants[vi]) << "\n";
        ExperimentResult r = RunFromManifest(m, ds, plan, out);
        table.cells[gi][vi][di] = r.test[0];
      }
    }
  }
  out << table.FormatText();
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    WriteText(fs::path(o.out) / "ablation.txt", table.FormatText());
    WriteText(fs::path(o.out) / "ablation.csv", table.FormatCsv());
  }
  return 0;
}

}  // namespace

const std::vector<std::string>& VariantNames() {
  static const std::vector<std::string> kNames = {
      "1b2l-rec-rm", "1b2l-rec", "1b2l", "2b1l-recurrent", "2b1l"};
  return kNames;
}

void ApplyPreset(const std::string& preset, const DatasetDescriptor& dataset,
                 bool inductive, ModelSpec& spec, TrainConfig& config) {
  spec = ModelSpec{};
  config = inductive ? TrainConfig::Inductive() : TrainConfig::Transductive();
  if (preset == "1b2l-rec-rm" || preset == "1b2l-rec" || preset == "1b2l") {
    spec.num_blocks = 1;
    spec.layers_per_block = 2;
    spec.reconstruction = preset == "1b2l";
    config.remove_sampled_edges = preset != "1b2l-rec-rm";
  } else if (preset == "2b1l" || preset == "2b1l-recurrent") {
    spec.num_blocks = 2;
    spec.layers_per_block = 1;
    spec.combine =
        preset == "2b1l" ? Combine::kStacked : Combine::kRecurrent;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown preset " + preset);
  }
  spec.lambda.assign(spec.num_blocks, spec.reconstruction ? 0.1 : 0.0);
  if (dataset.large) {
    spec.embed_dim = 64;
    spec.dropout = 0.3;
    config.batch_size = dataset.name == "ml-10m" ? 500000 : 100000;
  }
  spec.num_levels = dataset.scale.empty() ? spec.num_levels : dataset.scale.size();
}

LoadedDataset LoadDataset(const DatasetDescriptor& descriptor, FeatureMode mode) {
  LoadedDataset ds;
  ds.descriptor = descriptor;
  ds.data = LoadRatings(descriptor);
  ds.graph = ds.data.BuildGraph();
  if (mode == FeatureMode::kNone) return ds;
  if (descriptor.name == "ml-100k") {
    ds.user_features = BuildMl100kUserFeatures(descriptor.user_feature_path,
                                               ds.data.users);
    ds.item_features = BuildMl100kItemFeatures(descriptor.item_feature_path,
                                               ds.data.items);
    return ds;
  }
  if (!descriptor.user_feature_path.empty()) {
    ds.user_features = LoadFeatures(descriptor.user_feature_path, ds.data.users);
  }
  if (!descriptor.item_feature_path.empty()) {
    ds.item_features = LoadFeatures(descriptor.item_feature_path, ds.data.items);
  }
  return ds;
}

ordered_json RunManifest::ToJson() const {
  return {{"version", 1},
          {"dataset", DescriptorToJson(dataset)},
          {"preset", preset},
          {"use_features", use_features},
          {"model", SpecToJson(spec)},
          {"train", ConfigToJson(train)},
          {"plan_path", plan_path},
          {"output_dir", output_dir},
          {"seeds", seeds},
          {"precision", precision},
          {"deterministic", deterministic}};
}

RunManifest RunManifest::FromJson(const ordered_json& j) {
  if (j.value("version", 0) != 1) {
    throw Error(ErrorCode::kParseError, "unsupported manifest version");
  }
  RunManifest m;
  m.dataset = DescriptorFromJson(j.at("dataset"));
  m.preset = j.at("preset");
  m.use_features = j.at("use_features");
  m.spec = SpecFromJson(j.at("model"));
  m.train = ConfigFromJson(j.at("train"));
  m.plan_path = j.at("plan_path");
  m.output_dir = j.at("output_dir");
  m.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  m.precision = j.at("precision");
  m.deterministic = j.at("deterministic");
  return m;
}

void RunManifest::Save(const std::string& path) const {
  WriteText(path, ToJson().dump(2) + "\n");
}

RunManifest RunManifest::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  try {
    return FromJson(ordered_json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

ordered_json ExperimentResult::ToJson() const {
  ordered_json runs = ordered_json::array();
  for (const SeedOutcome& s : seeds) {
    runs.push_back({{"seed", s.seed},
                    {"valid_rmse", s.valid_rmse},
                    {"test_rmse", s.test_rmse},
                    {"best_iteration", s.best_iteration},
                    {"iterations", s.iterations}});
  }
  ordered_json summary = ordered_json::array();
  for (const MeanStd& m : test) {
    summary.push_back({{"mean", m.mean}, {"stddev", m.stddev}});
  }
  return {{"runs", runs}, {"test", summary}};
}

ExperimentResult RunExperiment(const RunManifest& manifest,
                               const LoadedDataset& dataset,
                               std::span<const SplitPlan> plans,
                               std::ostream* progress) {
  if (plans.empty()) throw Error(ErrorCode::kInvalidArgument, "no plans");
  if (manifest.seeds.empty()) throw Error(ErrorCode::kInvalidArgument, "no seeds");
  if (manifest.precision == "f32") {
    return RunTyped<float>(manifest, dataset, plans, progress);
  }
  if (manifest.precision == "f64") {
    return RunTyped<double>(manifest, dataset, plans, progress);
  }
  throw Error(ErrorCode::kInvalidArgument, "precision must be f32 or f64");
}

std::string AblationTable::FormatText() const {
  auto cell = [](const MeanStd& m) {
    if (std::isnan(m.mean)) return std::string("-");
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << m.mean << " +- "
       << std::setprecision(4) << m.stddev;
    return os.str();
  };
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"", "Models"};
  head.insert(head.end(), datasets.begin(), datasets.end());
  rows.push_back(head);
  for (size_t g = 0; g < groups.size(); ++g) {
    for (size_t v = 0; v < variants.size(); ++v) {
      std::vector<std::string> r{v == 0 ? groups[g] : "", VariantLabel(variants[v])};
      for (size_t d = 0; d < datasets.size(); ++d) r.push_back(cell(cells[g][v][d]));
      rows.push_back(r);
    }
  }
  std::vector<size_t> width(head.size(), 0);
  for (const auto& r : rows) {
    for (size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  for (const auto& r : rows) {
    for (size_t c = 0; c < r.size(); ++c) {
      os << std::left << std::setw(static_cast<int>(width[c])) << r[c]
         << (c + 1 == r.size() ? "\n" : " | ");
    }
  }
  return os.str();
}

std::string AblationTable::FormatCsv() const {
  std::ostringstream os;
  os << "group,model,dataset,mean,stddev\n";
  os << std::setprecision(17);
  for (size_t g = 0; g < groups.size(); ++g) {
    for (size_t v = 0; v < variants.size(); ++v) {
      for (size_t d = 0; d < datasets.size(); ++d) {
        os << groups[g] << ',' << variants[v] << ',' << datasets[d] << ','
           << cells[g][v][d].mean << ',' << cells[g][v][d].stddev << '\n';
      }
    }
  }
  return os.str();
}

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"STAR-GCN rating prediction"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--dataset", o.datasets, "dataset preset name(s)");
    sub->add_option("--data-dir", o.data_dir, "dataset root directory")
        ->envname("STARGCN_DATA_DIR");
    sub->add_option("--ratings", o.ratings, "custom rating file");
    sub->add_option("--delimiter", o.delimiter, "custom rating delimiter");
    sub->add_option("--features", o.features, "none, auto or both (ablate)")
        ->check(CLI::IsMember({"none", "auto", "both"}));
    sub->add_option("--seed,--seeds", o.seeds, "seed list");
    sub->add_option("--out", o.out, "output path");
  };
  auto protocol = [&](CLI::App* sub) {
    sub->add_option("--protocol", o.protocol)
        ->check(CLI::IsMember({"transductive", "inductive-items", "inductive-users"}));
    sub->add_option("--fold", o.fold, "provided fold number, 0 for random");
    sub->add_option("--test-fraction", o.test_fraction);
    sub->add_option("--valid-fraction", o.valid_fraction);
    sub->add_option("--hold", o.hold, "held-out node fraction");
    sub->add_option("--reveal", o.reveal, "revealed edge fraction");
  };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--plan", o.plan, "split plan file");
    sub->add_option("--precision", o.precision)
        ->check(CLI::IsMember({"f32", "f64"}));
    sub->add_flag("--deterministic", o.deterministic);
    sub->add_option("--max-iterations", o.max_iterations);
  };

  CLI::App* split = app.add_subcommand("split", "write a split plan");
  common(split);
  protocol(split);
  CLI::App* train = app.add_subcommand("train", "train and checkpoint");
  common(train);
  protocol(train);
  training(train);
  train->add_option("--preset", o.preset)->check(CLI::IsMember(VariantNames()));
  train->add_option("--manifest", o.manifest, "rerun a saved manifest");
  CLI::App* eval = app.add_subcommand("eval", "score checkpoints on a plan");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoints)->required();
  eval->add_option("--plan", o.plan)->required();
  CLI::App* ablate = app.add_subcommand("ablate", "run the variant grid");
  common(ablate);
  protocol(ablate);
  training(ablate);
  ablate->add_option("--variants", o.variants)->check(CLI::IsMember(VariantNames()));

  std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(),
                               args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (*split) return CmdSplit(o, out);
    if (*train) return CmdTrain(o, out);
    if (*eval) return CmdEval(o, out);
    if (*ablate) return CmdAblate(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kNonFiniteLoss ? 3 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace stargcn
