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

#include "stargcn/data_io.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stargcn/error.h"

namespace stargcn {

namespace {

std::vector<std::string> SplitFields(const std::string& line,
                                     const std::string& delimiter) {
  std::vector<std::string> out;
  if (delimiter == "ws") {
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
  }
  size_t start = 0;
  while (true) {
    size_t pos = line.find(delimiter, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + delimiter.size();
  }
  return out;
}

std::string Trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string Where(const std::string& path, int64_t line) {
  return path + ":" + std::to_string(line);
}

double ParseReal(const std::string& tok, const std::string& where) {
  std::string t = Trim(tok);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorCode::kParseError, where + ": bad number '" + tok + "'");
  }
  return v;
}

std::ifstream OpenOrThrow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return in;
}

void CheckCount(const char* what, const std::optional<int64_t>& expected,
                int64_t actual) {
  if (expected && *expected != actual) {
    throw Error(ErrorCode::kCountMismatch,
                std::string(what) + ": expected " + std::to_string(*expected) +
                    ", found " + std::to_string(actual));
  }
}

const std::vector<std::string>& Ml100kOccupations() {
  static const std::vector<std::string> kList = {
      "administrator", "artist",     "doctor",    "educator",   "engineer",
      "entertainment", "executive",  "healthcare", "homemaker", "lawyer",
      "librarian",     "marketing",  "none",      "other",      "programmer",
      "retired",       "salesman",   "scientist", "student",    "technician",
      "writer"};
  return kList;
}

}  // namespace

int32_t IdMap::Intern(const std::string& raw) {
  auto [it, inserted] = to_dense_.try_emplace(raw, size());
  if (inserted) to_raw_.push_back(raw);
  return it->second;
}

std::optional<int32_t> IdMap::Find(const std::string& raw) const {
  auto it = to_dense_.find(raw);
  if (it == to_dense_.end()) return std::nullopt;
  return it->second;
}

DatasetDescriptor DatasetPreset(const std::string& name,
                                const std::string& data_dir) {
  namespace fs = std::filesystem;
  DatasetDescriptor d;
  d.name = name;
  d.data_dir = data_dir;
  if (name == "ml-100k") {
    fs::path dir = fs::path(data_dir) / "ml-100k";
    d.rating_path = (dir / "u.data").string();
    d.delimiter = "\t";
    d.scale = RatingLevels::Range(1, 5, 1);
    d.expected_users = 943;
    d.expected_items = 1682;
    d.expected_ratings = 100000;
    d.user_feature_path = (dir / "u.user").string();
    d.item_feature_path = (dir / "u.item").string();
  } else if (name == "ml-1m") {
    fs::path dir = fs::path(data_dir) / "ml-1m";
    d.rating_path = (dir / "ratings.dat").string();
    d.delimiter = "::";
    d.scale = RatingLevels::Range(1, 5, 1);
    d.expected_users = 6040;
    d.expected_items = 3706;
    d.expected_ratings = 1000209;
    d.large = true;
  } else if (name == "ml-10m") {
    fs::path dir = fs::path(data_dir) / "ml-10m";
    d.rating_path = (dir / "ratings.dat").string();
    d.delimiter = "::";
    d.scale = RatingLevels::Range(0.5, 5, 0.5);
    d.expected_users = 69878;
    d.expected_items = 10677;
    d.expected_ratings = 10000054;
    d.large = true;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown dataset " + name);
  }
  return d;
}

RatingGraph RatingData::BuildGraph() const {
  return RatingGraph::Build(triples, levels, users.size(), items.size());
}

RatingData LoadRatings(const DatasetDescriptor& descriptor) {
  std::ifstream in = OpenOrThrow(descriptor.rating_path);
  RatingData data;
  std::string line;
  int64_t line_no = 0;
  std::vector<std::pair<int64_t, double>> raw_values;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    auto fields = SplitFields(line, descriptor.delimiter);
    const std::string where = Where(descriptor.rating_path, line_no);
    if (fields.size() < 3) {
      throw Error(ErrorCode::kParseError, where + ": expected 3 fields");
    }
    std::string u = Trim(fields[0]), v = Trim(fields[1]);
    if (u.empty() || v.empty()) {
      throw Error(ErrorCode::kParseError, where + ": empty id");
    }
    double value = ParseReal(fields[2], where);
    if (!descriptor.scale.empty() && !descriptor.scale.IndexOf(value)) {
      throw Error(ErrorCode::kUnknownRatingLevel,
                  where + ": rating " + Trim(fields[2]));
    }
    data.triples.push_back({data.users.Intern(u), data.items.Intern(v), value});
  }
  if (!descriptor.scale.empty()) {
    data.levels = descriptor.scale;
  } else if (!data.triples.empty()) {
    std::set<double> distinct;
    for (const Rating& r : data.triples) distinct.insert(r.value);
    data.levels = RatingLevels({distinct.begin(), distinct.end()});
  }
  CheckCount("users", descriptor.expected_users, data.users.size());
  CheckCount("items", descriptor.expected_items, data.items.size());
  CheckCount("ratings", descriptor.expected_ratings,
             static_cast<int64_t>(data.triples.size()));
  return data;
}

std::vector<EdgeId> LoadFoldEdges(const std::string& path,
                                  const std::string& delimiter,
                                  const RatingData& data,
                                  const RatingGraph& graph) {
  std::unordered_map<int64_t, EdgeId> index;
  index.reserve(graph.num_edges());
  const int64_t m = graph.num_items();
  for (EdgeId id = 0; id < graph.num_edges(); ++id) {
    index.emplace(int64_t{graph.edge(id).user} * m + graph.edge(id).item, id);
  }
  std::ifstream in = OpenOrThrow(path);
  std::vector<EdgeId> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    auto fields = SplitFields(line, delimiter);
    const std::string where = Where(path, line_no);
    if (fields.size() < 3) {
      throw Error(ErrorCode::kParseError, where + ": expected 3 fields");
    }
    auto u = data.users.Find(Trim(fields[0]));
    auto v = data.items.Find(Trim(fields[1]));
    if (!u || !v) throw Error(ErrorCode::kUnknownPair, where);
    auto it = index.find(int64_t{*u} * m + *v);
    if (it == index.end()) throw Error(ErrorCode::kUnknownPair, where);
    if (graph.edge(it->second).value != ParseReal(fields[2], where)) {
      throw Error(ErrorCode::kParseError, where + ": rating differs");
    }
    out.push_back(it->second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

FeatureMatrix LoadFeatures(const std::string& path, const IdMap& ids) {
  std::ifstream in = OpenOrThrow(path);
  std::string header;
  int64_t line_no = 1;
  while (std::getline(in, header) && Trim(header).empty()) ++line_no;
  header = Trim(header);
  if (header != "#dense" && header != "#sparse") {
    throw Error(ErrorCode::kParseError,
                Where(path, line_no) + ": expected #dense or #sparse header");
  }
  const bool dense = header == "#dense";
  FeatureMatrix fm;
  fm.source = path;
  std::map<int32_t, std::vector<double>> rows;
  std::vector<std::tuple<int32_t, int64_t, double>> cells;
  int64_t dim = -1;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty() || line[0] == '#') continue;
    auto fields = SplitFields(line, "ws");
    const std::string where = Where(path, line_no);
    auto node = ids.Find(fields[0]);
    if (!node) throw Error(ErrorCode::kParseError, where + ": unknown id " + fields[0]);
    if (dense) {
      std::vector<double> row;
      for (size_t k = 1; k < fields.size(); ++k) {
        row.push_back(ParseReal(fields[k], where));
      }
      if (dim >= 0 && static_cast<int64_t>(row.size()) != dim) {
        throw Error(ErrorCode::kDimensionConflict,
                    where + ": row has " + std::to_string(row.size()) +
                        " values, expected " + std::to_string(dim));
      }
      dim = static_cast<int64_t>(row.size());
      if (!rows.emplace(*node, std::move(row)).second) {
        throw Error(ErrorCode::kDimensionConflict, where + ": repeated node");
      }
    } else {
      if (fields.size() != 3) {
        throw Error(ErrorCode::kParseError, where + ": expected id col value");
      }
      double col = ParseReal(fields[1], where);
      if (col < 0 || col != std::floor(col)) {
        throw Error(ErrorCode::kParseError, where + ": bad column");
      }
      cells.emplace_back(*node, static_cast<int64_t>(col),
                         ParseReal(fields[2], where));
      dim = std::max<int64_t>(dim, static_cast<int64_t>(col) + 1);
    }
  }
  fm.values = Matrix<double>::Zero(ids.size(), std::max<int64_t>(dim, 0));
  std::vector<char> seen(ids.size(), 0);
  for (auto& [node, row] : rows) {
    for (size_t k = 0; k < row.size(); ++k) fm.values(node, k) = row[k];
    seen[node] = 1;
  }
  for (auto& [node, col, value] : cells) {
    fm.values(node, col) += value;
    seen[node] = 1;
  }
  fm.missing_rows = static_cast<int32_t>(std::count(seen.begin(), seen.end(), 0));
  return fm;
}

FeatureMatrix NormalizeFeatures(const FeatureMatrix& matrix, Normalization mode,
                                std::span<const int32_t> stat_rows) {
  FeatureMatrix out = matrix;
  out.normalization = mode;
  if (mode == Normalization::kNone) return out;
  const auto n = matrix.values.rows();
  std::vector<int32_t> all;
  if (stat_rows.empty()) {
    all.resize(n);
    for (int32_t i = 0; i < n; ++i) all[i] = i;
    stat_rows = all;
  }
  if (stat_rows.empty()) return out;
  for (Eigen::Index c = 0; c < matrix.values.cols(); ++c) {
    double mean = 0.0;
    for (int32_t r : stat_rows) mean += matrix.values(r, c);
    mean /= static_cast<double>(stat_rows.size());
    double var = 0.0;
    for (int32_t r : stat_rows) {
      double d = matrix.values(r, c) - mean;
      var += d * d;
    }
    double sd = std::sqrt(var / static_cast<double>(stat_rows.size()));
    for (Eigen::Index r = 0; r < n; ++r) {
      out.values(r, c) = sd > 0.0 ? (matrix.values(r, c) - mean) / sd : 0.0;
    }
  }
  return out;
}

FeatureMatrix BuildMl100kUserFeatures(const std::string& user_path,
                                      const IdMap& users) {
  const auto& occupations = Ml100kOccupations();
  FeatureMatrix fm;
  fm.source = user_path + " (age, gender, occupation)";
  fm.values = Matrix<double>::Zero(users.size(), 2 + occupations.size());
  std::vector<char> seen(users.size(), 0);
  std::ifstream in = OpenOrThrow(user_path);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    auto f = SplitFields(Trim(line), "|");
    const std::string where = Where(user_path, line_no);
    if (f.size() < 4) throw Error(ErrorCode::kParseError, where);
    auto node = users.Find(f[0]);
    if (!node) continue;  // user without ratings
    fm.values(*node, 0) = ParseReal(f[1], where);
    fm.values(*node, 1) = f[2] == "M" ? 1.0 : 0.0;
    auto it = std::find(occupations.begin(), occupations.end(), f[3]);
    if (it == occupations.end()) {
      throw Error(ErrorCode::kParseError, where + ": occupation " + f[3]);
    }
    fm.values(*node, 2 + (it - occupations.begin())) = 1.0;
    seen[*node] = 1;
  }
  fm.missing_rows = static_cast<int32_t>(std::count(seen.begin(), seen.end(), 0));
  return fm;
}

FeatureMatrix BuildMl100kItemFeatures(const std::string& item_path,
                                      const IdMap& items) {
  constexpr int kGenres = 19;
  FeatureMatrix fm;
  fm.source = item_path + " (release year, genres)";
  fm.values = Matrix<double>::Zero(items.size(), 1 + kGenres);
  std::vector<char> seen(items.size(), 0), has_year(items.size(), 0);
  std::ifstream in(item_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + item_path);
  std::string line;
  int64_t line_no = 0;
  double year_sum = 0.0;
  int year_count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    auto f = SplitFields(Trim(line), "|");
    const std::string where = Where(item_path, line_no);
    if (f.size() < 5 + kGenres) throw Error(ErrorCode::kParseError, where);
    auto node = items.Find(f[0]);
    if (!node) continue;
    const size_t base = f.size() - kGenres;
    for (int g = 0; g < kGenres; ++g) {
      fm.values(*node, 1 + g) = ParseReal(f[base + g], where);
    }
    std::string date = Trim(f[2]);
    const bool dated = date.size() >= 4 &&
                       std::all_of(date.end() - 4, date.end(),
                                   [](unsigned char c) { return std::isdigit(c); });
    if (dated) {
      double year = ParseReal(date.substr(date.size() - 4), where);
      fm.values(*node, 0) = year;
      has_year[*node] = 1;
      year_sum += year;
      ++year_count;
    }
    seen[*node] = 1;
  }
  // Unknown release dates take the mean year.
  if (year_count > 0) {
    for (int32_t i = 0; i < items.size(); ++i) {
      if (!has_year[i]) fm.values(i, 0) = year_sum / year_count;
    }
  }
  fm.missing_rows = static_cast<int32_t>(std::count(seen.begin(), seen.end(), 0));
  return fm;
}

}  // namespace stargcn
