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

#ifndef STARGCN_CLI_H_
#define STARGCN_CLI_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "stargcn/data_io.h"
#include "stargcn/evaluation.h"
#include "stargcn/model.h"
#include "stargcn/training.h"

namespace stargcn {

// Seed s initializes parameters from RngStream(s).Fork(kInitStreamTag);
// training draws from RngStream(s) itself.
inline constexpr uint64_t kInitStreamTag = 0x1417;

// Model variants of the ablation grid, in table order.
const std::vector<std::string>& VariantNames();

// Fills architecture and schedule for a named variant. The dataset picks
// the small or large hyperparameter set; inductive plans switch masking.
void ApplyPreset(const std::string& preset, const DatasetDescriptor& dataset,
                 bool inductive, ModelSpec& spec, TrainConfig& config);

enum class FeatureMode { kNone, kAuto };

struct LoadedDataset {
  DatasetDescriptor descriptor;
  RatingData data;
  RatingGraph graph;
  std::optional<FeatureMatrix> user_features;  // raw, not normalized
  std::optional<FeatureMatrix> item_features;
};

// kAuto uses the MovieLens-100K side files for that preset and the
// descriptor's feature files otherwise.
LoadedDataset LoadDataset(const DatasetDescriptor& descriptor, FeatureMode mode);

struct RunManifest {
  DatasetDescriptor dataset;
  std::string preset;
  bool use_features = false;
  ModelSpec spec;
  TrainConfig train;
  std::string plan_path;
  std::string output_dir;
  std::vector<uint64_t> seeds;
  std::string precision = "f64";
  bool deterministic = true;

  nlohmann::ordered_json ToJson() const;
  static RunManifest FromJson(const nlohmann::ordered_json& j);
  void Save(const std::string& path) const;
  static RunManifest Load(const std::string& path);
};

struct SeedOutcome {
  uint64_t seed = 0;
  double valid_rmse = 0.0;
  std::vector<double> test_rmse;  // one per evaluated plan
  int best_iteration = 0;
  int iterations = 0;
  bool early_stopped = false;
};

struct ExperimentResult {
  std::vector<SeedOutcome> seeds;
  std::vector<MeanStd> test;  // per evaluated plan, across seeds

  nlohmann::ordered_json ToJson() const;
};

// Trains once per manifest seed on plans[0]'s train/valid edges and scores
// every plan's test edges (they must share the training partition). When
// manifest.output_dir is set, writes the manifest, and per seed a
// checkpoint, the training log and a result record.
ExperimentResult RunExperiment(const RunManifest& manifest,
                               const LoadedDataset& dataset,
                               std::span<const SplitPlan> plans,
                               std::ostream* progress = nullptr);

struct AblationTable {
  std::vector<std::string> datasets;
  std::vector<std::string> variants;
  std::vector<std::string> groups;     // "Emb. only", "With Fea."
  // cells[group][variant][dataset]; NaN when not run.
  std::vector<std::vector<std::vector<MeanStd>>> cells;

  std::string FormatText() const;
  std::string FormatCsv() const;
};

// Entry point shared by the stargcn binary and tests. argv[0] is ignored.
// Returns 0 iff every requested run completed.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace stargcn

#endif  // STARGCN_CLI_H_
