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

#ifndef STARGCN_DATA_IO_H_
#define STARGCN_DATA_IO_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stargcn/rating_graph.h"
#include "stargcn/tape.h"

namespace stargcn {

// Raw string ids <-> dense indices in order of first appearance.
class IdMap {
 public:
  int32_t Intern(const std::string& raw);
  std::optional<int32_t> Find(const std::string& raw) const;
  const std::string& Raw(int32_t dense) const { return to_raw_.at(dense); }
  int32_t size() const { return static_cast<int32_t>(to_raw_.size()); }
  bool empty() const { return to_raw_.empty(); }
  const std::vector<std::string>& raw_ids() const { return to_raw_; }

 private:
  std::unordered_map<std::string, int32_t> to_dense_;
  std::vector<std::string> to_raw_;
};

struct DatasetDescriptor {
  std::string name;
  std::string rating_path;
  std::string delimiter = "\t";   // "ws" splits on any whitespace
  RatingLevels scale;
  std::optional<int64_t> expected_users;
  std::optional<int64_t> expected_items;
  std::optional<int64_t> expected_ratings;
  std::string user_feature_path;  // empty when absent
  std::string item_feature_path;
  std::string data_dir;
  bool large = false;             // selects the large hyperparameter set
};

// ml-100k, ml-1m, ml-10m with files resolved under data_dir.
DatasetDescriptor DatasetPreset(const std::string& name,
                                const std::string& data_dir);

struct RatingData {
  std::vector<Rating> triples;
  RatingLevels levels;
  IdMap users;
  IdMap items;

  RatingGraph BuildGraph() const;
};

// Reads one rating file. The optional limit on counts is checked after
// parsing; trailing fields are ignored.
RatingData LoadRatings(const DatasetDescriptor& descriptor);

// Test edges of a fold file (same format as the ratings), resolved against
// the full dataset. Every pair must exist in `graph`.
std::vector<EdgeId> LoadFoldEdges(const std::string& path,
                                  const std::string& delimiter,
                                  const RatingData& data,
                                  const RatingGraph& graph);

enum class Normalization { kNone, kZScore };

struct FeatureMatrix {
  Matrix<double> values;
  Normalization normalization = Normalization::kNone;
  std::string source;
  int32_t missing_rows = 0;

  int32_t num_rows() const { return static_cast<int32_t>(values.rows()); }
  int32_t dim() const { return static_cast<int32_t>(values.cols()); }
};

// File starts with "#dense" (rows: raw id then values) or "#sparse"
// (lines: raw id, column, value). Ids unknown to `ids` are a ParseError;
// nodes without a record get zero rows.
FeatureMatrix LoadFeatures(const std::string& path, const IdMap& ids);

// Column statistics come from `stat_rows` when given, else from all rows.
FeatureMatrix NormalizeFeatures(const FeatureMatrix& matrix, Normalization mode,
                                std::span<const int32_t> stat_rows = {});

// MovieLens-100K side information: users get age, gender and a 21-way
// occupation one-hot (23 columns); items get release year and 19 genre
// flags (20 columns).
FeatureMatrix BuildMl100kUserFeatures(const std::string& user_path,
                                      const IdMap& users);
FeatureMatrix BuildMl100kItemFeatures(const std::string& item_path,
                                      const IdMap& items);

template <typename T>
Matrix<T> CastFeatures(const FeatureMatrix& m) {
  return m.values.cast<T>();
}

}  // namespace stargcn

#endif  // STARGCN_DATA_IO_H_
