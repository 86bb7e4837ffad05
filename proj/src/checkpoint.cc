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

#include "stargcn/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stargcn/error.h"

namespace stargcn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'R', 'G', 'C', 'N', '\x01'};

class Writer {
 public:
  template <typename U>
  void Put(U v) {
    uint8_t raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(raw, raw + sizeof(U));
    }
    out_.insert(out_.end(), raw, raw + sizeof(U));
  }
  void PutBytes(const void* p, size_t n) {
    auto* b = static_cast<const uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<uint8_t> Take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& in) : in_(in) {}
  template <typename U>
  U Get() {
    Need(sizeof(U));
    uint8_t raw[sizeof(U)];
    std::memcpy(raw, in_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(raw, raw + sizeof(U));
    }
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, raw, sizeof(U));
    return v;
  }
  std::string GetString(size_t n) {
    Need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void Need(size_t n) const {
    if (pos_ + n > in_.size()) {
      throw Error(ErrorCode::kParseError, "checkpoint truncated");
    }
  }
  const std::vector<uint8_t>& in_;
  size_t pos_ = 0;
};

void WriteSpec(Writer& w, const ModelSpec& s) {
  w.Put<int32_t>(s.num_blocks);
  w.Put<int32_t>(s.layers_per_block);
  w.Put<uint8_t>(s.combine == Combine::kRecurrent ? 1 : 0);
  w.Put<uint8_t>(s.reconstruction ? 1 : 0);
  w.Put<int32_t>(s.embed_dim);
  w.Put<int32_t>(s.feature_dim);
  w.Put<int32_t>(s.user_feature_in);
  w.Put<int32_t>(s.item_feature_in);
  w.Put<int32_t>(s.aggregate_dim);
  w.Put<int32_t>(s.encoder_dim);
  w.Put<int32_t>(s.projection_dim);
  w.Put<int32_t>(s.num_levels);
  w.Put<double>(s.dropout);
  w.Put<double>(s.leaky_slope);
  w.Put<uint8_t>(s.effective_degrees ? 1 : 0);
  w.Put<uint32_t>(static_cast<uint32_t>(s.lambda.size()));
  for (double l : s.lambda) w.Put<double>(l);
}

ModelSpec ReadSpec(Reader& r) {
  ModelSpec s;
  s.num_blocks = r.Get<int32_t>();
  s.layers_per_block = r.Get<int32_t>();
  s.combine = r.Get<uint8_t>() ? Combine::kRecurrent : Combine::kStacked;
  s.reconstruction = r.Get<uint8_t>() != 0;
  s.embed_dim = r.Get<int32_t>();
  s.feature_dim = r.Get<int32_t>();
  s.user_feature_in = r.Get<int32_t>();
  s.item_feature_in = r.Get<int32_t>();
  s.aggregate_dim = r.Get<int32_t>();
  s.encoder_dim = r.Get<int32_t>();
  s.projection_dim = r.Get<int32_t>();
  s.num_levels = r.Get<int32_t>();
  s.dropout = r.Get<double>();
  s.leaky_slope = r.Get<double>();
  s.effective_degrees = r.Get<uint8_t>() != 0;
  uint32_t n = r.Get<uint32_t>();
  if (n > 1024) throw Error(ErrorCode::kParseError, "lambda count");
  s.lambda.resize(n);
  for (auto& l : s.lambda) l = r.Get<double>();
  return s;
}

std::vector<uint8_t> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

template <typename T>
std::vector<uint8_t> EncodeCheckpoint(const Checkpoint<T>& ckpt) {
  Writer w;
  w.PutBytes(kMagic, sizeof(kMagic));
  w.Put<uint32_t>(kCheckpointVersion);
  w.Put<uint8_t>(sizeof(T));
  w.Put<uint32_t>(static_cast<uint32_t>(ckpt.num_users));
  w.Put<uint32_t>(static_cast<uint32_t>(ckpt.num_items));
  WriteSpec(w, ckpt.spec);
  w.Put<uint64_t>(ckpt.rng.seed());
  w.Put<uint64_t>(ckpt.rng.counter());
  w.Put<uint32_t>(static_cast<uint32_t>(ckpt.params.params.size()));
  for (const auto& p : ckpt.params.params) {
    w.Put<uint32_t>(static_cast<uint32_t>(p.name.size()));
    w.PutBytes(p.name.data(), p.name.size());
    w.Put<uint64_t>(static_cast<uint64_t>(p.value.rows()));
    w.Put<uint64_t>(static_cast<uint64_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      w.Put<T>(p.value.data()[i]);
    }
  }
  return w.Take();
}

template <typename T>
Checkpoint<T> DecodeCheckpoint(const std::vector<uint8_t>& bytes) {
  Reader r(bytes);
  if (r.GetString(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw Error(ErrorCode::kParseError, "not a checkpoint");
  }
  uint32_t version = r.Get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kParseError,
                "unsupported checkpoint version " + std::to_string(version));
  }
  uint8_t width = r.Get<uint8_t>();
  if (width != sizeof(T)) {
    throw Error(ErrorCode::kSpecMismatch, "checkpoint precision differs");
  }
  Checkpoint<T> ck;
  ck.num_users = static_cast<int32_t>(r.Get<uint32_t>());
  ck.num_items = static_cast<int32_t>(r.Get<uint32_t>());
  ck.spec = ReadSpec(r);
  uint64_t seed = r.Get<uint64_t>();
  uint64_t counter = r.Get<uint64_t>();
  ck.rng = RngStream(seed, counter);

  // Rebuild the id layout, then overwrite every value from the file.
  RngStream scratch(0);
  ck.params = InitParameters<T>(ck.spec, scratch, ck.num_users, ck.num_items);
  uint32_t count = r.Get<uint32_t>();
  if (count != ck.params.params.size()) {
    throw Error(ErrorCode::kSpecMismatch, "parameter count differs from spec");
  }
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t len = r.Get<uint32_t>();
    std::string name = r.GetString(len);
    auto rows = static_cast<Eigen::Index>(r.Get<uint64_t>());
    auto cols = static_cast<Eigen::Index>(r.Get<uint64_t>());
    Parameter<T>& p = ck.params.params[i];
    if (p.name != name || p.value.rows() != rows || p.value.cols() != cols) {
      throw Error(ErrorCode::kSpecMismatch, "parameter " + name);
    }
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      p.value.data()[k] = r.Get<T>();
    }
  }
  if (!r.done()) throw Error(ErrorCode::kParseError, "trailing bytes");
  ck.params.ZeroGrad();
  return ck;
}

template <typename T>
void SaveCheckpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  auto bytes = EncodeCheckpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
Checkpoint<T> LoadCheckpoint(const std::string& path) {
  return DecodeCheckpoint<T>(ReadFile(path));
}

int CheckpointScalarBytes(const std::string& path) {
  auto bytes = ReadFile(path);
  Reader r(bytes);
  if (r.GetString(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw Error(ErrorCode::kParseError, "not a checkpoint");
  }
  r.Get<uint32_t>();
  return r.Get<uint8_t>();
}

template std::vector<uint8_t> EncodeCheckpoint<float>(const Checkpoint<float>&);
template std::vector<uint8_t> EncodeCheckpoint<double>(const Checkpoint<double>&);
template Checkpoint<float> DecodeCheckpoint<float>(const std::vector<uint8_t>&);
template Checkpoint<double> DecodeCheckpoint<double>(const std::vector<uint8_t>&);
template void SaveCheckpoint<float>(const std::string&, const Checkpoint<float>&);
template void SaveCheckpoint<double>(const std::string&, const Checkpoint<double>&);
template Checkpoint<float> LoadCheckpoint<float>(const std::string&);
template Checkpoint<double> LoadCheckpoint<double>(const std::string&);

}  // namespace stargcn
