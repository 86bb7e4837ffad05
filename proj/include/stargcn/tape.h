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

#ifndef STARGCN_TAPE_H_
#define STARGCN_TAPE_H_

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stargcn/error.h"
#include "stargcn/rng.h"

namespace stargcn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

// Handle to a value slot on a Tape.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// CSR-style segment table: segment j owns entries [offsets[j], offsets[j+1]).
struct Segments {
  std::vector<int64_t> offsets{0};
  std::vector<int32_t> index;

  int64_t num_segments() const {
    return static_cast<int64_t>(offsets.size()) - 1;
  }
};

template <typename T>
struct WeightedSegments {
  Segments segments;
  std::vector<T> weight;  // one per entry of segments.index
};

enum class OpKind {
  kConstant,
  kParameter,
  kAffine,
  kLeakyRelu,
  kDropout,
  kGatherRows,
  kSegmentSum,
  kWeightedSegmentSum,
  kReshape,
  kScaleRows,
  kConcatCols,
  kRowDot,
  kAdd,
  kSub,
  kScale,
  kSumSquares,
};

const char* OpKindName(OpKind kind);

// Records a forward pass over a closed set of differentiable ops and replays
// it in reverse. Parameter gradients accumulate straight into
// Parameter::grad; every other slot keeps its own lazily-zeroed buffer.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Throws NonFiniteLoss from any op whose output is not finite.
  void set_check_finite(bool on) { check_finite_ = on; }

  Var Constant(Matrix<T> value);
  // Non-owning constant; `value` must outlive the tape.
  Var ConstantRef(const Matrix<T>& value);
  Var Param(Parameter<T>& param);

  // out[i] = W * x[i] + b. W is [out x in], b is [1 x out] or invalid.
  Var Affine(Var x, Var w, Var b);
  Var LeakyRelu(Var x, T slope);
  // Inverted dropout; identity when !training or rate == 0.
  Var Dropout(Var x, T rate, RngStream& rng, bool training);
  Var GatherRows(Var table, std::span<const int32_t> indices);
  Var SegmentSum(Var rows, std::shared_ptr<const Segments> segments);
  Var WeightedSegmentSum(Var rows,
                         std::shared_ptr<const WeightedSegments<T>> segments);
  Var Reshape(Var x, int64_t rows, int64_t cols);
  // Rows scaled by constant weights.
  Var ScaleRows(Var x, std::vector<T> weights);
  Var ConcatCols(Var a, Var b);
  // [n x 1] of row-wise inner products.
  Var RowDot(Var a, Var b);
  Var Add(Var a, Var b);
  Var Sub(Var a, Var b);
  Var Scale(Var a, T c);
  // [1 x 1] sum of squared entries.
  Var SumSquares(Var a);

  const Matrix<T>& value(Var v) const;
  T scalar(Var v) const { return value(v)(0, 0); }
  // Gradient of the last Backward() target with respect to v; zero when v
  // was not reached.
  Matrix<T> grad(Var v) const;

  void Backward(Var loss);
  void Reset();

  size_t num_nodes() const { return nodes_.size(); }
  OpKind kind(Var v) const { return nodes_[v.id].kind; }
  const std::vector<int32_t>& inputs(Var v) const { return nodes_[v.id].inputs; }

 private:
  struct Slot {
    Matrix<T> owned;
    const Matrix<T>* ref = nullptr;
    Parameter<T>* param = nullptr;
    Matrix<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
  };

  struct Node {
    OpKind kind;
    std::vector<int32_t> inputs;
    std::function<void()> backward;
  };

  Var Push(OpKind kind, std::vector<int32_t> inputs, Matrix<T> value,
           bool requires_grad);
  bool RequiresGrad(Var v) const { return slots_[v.id].requires_grad; }
  Matrix<T>& GradRef(Var v);
  const Matrix<T>& OutGrad(Var v) const { return slots_[v.id].grad; }
  void CheckValid(Var v) const;
  void ensureRecording() const;

  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
  bool check_finite_ = false;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------

template <typename T>
void Tape<T>::CheckValid(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int32_t>(slots_.size())) {
    throw Error(ErrorCode::kInvalidArgument, "unknown tape variable");
  }
}

template <typename T>
void Tape<T>::ensureRecording() const {
  if (backward_done_) {
    throw Error(ErrorCode::kInvalidArgument,
                "tape must be Reset() after Backward()");
  }
}

template <typename T>
Var Tape<T>::Push(OpKind kind, std::vector<int32_t> inputs, Matrix<T> value,
                  bool requires_grad) {
  ensureRecording();
  if (check_finite_ && !value.allFinite()) {
    throw Error(ErrorCode::kNonFiniteLoss,
                std::string("non-finite output from ") + OpKindName(kind));
  }
  Slot slot;
  slot.owned = std::move(value);
  slot.requires_grad = requires_grad;
  slots_.push_back(std::move(slot));
  nodes_.push_back(Node{kind, std::move(inputs), nullptr});
  return Var{static_cast<int32_t>(slots_.size() - 1)};
}

template <typename T>
const Matrix<T>& Tape<T>::value(Var v) const {
  CheckValid(v);
  const Slot& s = slots_[v.id];
  if (s.param) return s.param->value;
  if (s.ref) return *s.ref;
  return s.owned;
}

template <typename T>
Matrix<T> Tape<T>::grad(Var v) const {
  CheckValid(v);
  const Slot& s = slots_[v.id];
  if (s.param) {
    if (s.param->grad.size() == 0) {
      return Matrix<T>::Zero(s.param->value.rows(), s.param->value.cols());
    }
    return s.param->grad;
  }
  if (!s.has_grad) {
    const Matrix<T>& x = value(v);
    return Matrix<T>::Zero(x.rows(), x.cols());
  }
  return s.grad;
}

template <typename T>
Matrix<T>& Tape<T>::GradRef(Var v) {
  Slot& s = slots_[v.id];
  if (s.param) {
    if (s.param->grad.rows() != s.param->value.rows() ||
        s.param->grad.cols() != s.param->value.cols()) {
      s.param->ZeroGrad();
    }
    return s.param->grad;
  }
  if (!s.has_grad) {
    const Matrix<T>& x = value(v);
    s.grad.setZero(x.rows(), x.cols());
    s.has_grad = true;
  }
  return s.grad;
}

template <typename T>
Var Tape<T>::Constant(Matrix<T> value) {
  return Push(OpKind::kConstant, {}, std::move(value), false);
}

template <typename T>
Var Tape<T>::ConstantRef(const Matrix<T>& value) {
  Var v = Push(OpKind::kConstant, {}, Matrix<T>(), false);
  slots_[v.id].ref = &value;
  return v;
}

template <typename T>
Var Tape<T>::Param(Parameter<T>& param) {
  Var v = Push(OpKind::kParameter, {}, Matrix<T>(), true);
  slots_[v.id].param = &param;
  return v;
}

template <typename T>
Var Tape<T>::Affine(Var x, Var w, Var b) {
  CheckValid(x);
  CheckValid(w);
  const Matrix<T>& X = value(x);
  const Matrix<T>& W = value(w);
  if (X.cols() != W.cols()) {
    throw Error(ErrorCode::kShapeMismatch,
                "affine: input has " + std::to_string(X.cols()) +
                    " columns, weight expects " + std::to_string(W.cols()));
  }
  Matrix<T> out(X.rows(), W.rows());
  out.noalias() = X * W.transpose();
  bool has_bias = b.valid();
  if (has_bias) {
    const Matrix<T>& B = value(b);
    if (B.rows() != 1 || B.cols() != W.rows()) {
      throw Error(ErrorCode::kShapeMismatch, "affine: bias shape");
    }
    out.rowwise() += B.row(0);
  }
  bool rg = RequiresGrad(x) || RequiresGrad(w) || (has_bias && RequiresGrad(b));
  std::vector<int32_t> in{x.id, w.id};
  if (has_bias) in.push_back(b.id);
  Var y = Push(OpKind::kAffine, std::move(in), std::move(out), rg);
  nodes_[y.id].backward = [this, x, w, b, y, has_bias]() {
    const Matrix<T>& dY = OutGrad(y);
    if (RequiresGrad(x)) GradRef(x).noalias() += dY * value(w);
    if (RequiresGrad(w)) GradRef(w).noalias() += dY.transpose() * value(x);
    if (has_bias && RequiresGrad(b)) GradRef(b) += dY.colwise().sum();
  };
  return y;
}

template <typename T>
Var Tape<T>::LeakyRelu(Var x, T slope) {
  CheckValid(x);
  if (!(slope >= T(0) && slope < T(1))) {
    throw Error(ErrorCode::kInvalidArgument, "leaky slope must be in [0,1)");
  }
  const Matrix<T>& X = value(x);
  Matrix<T> out = X.unaryExpr(
      [slope](T v) { return v >= T(0) ? v : slope * v; });
  Var y = Push(OpKind::kLeakyRelu, {x.id}, std::move(out), RequiresGrad(x));
  nodes_[y.id].backward = [this, x, y, slope]() {
    if (!RequiresGrad(x)) return;
    const Matrix<T>& X = value(x);
    GradRef(x).array() +=
        OutGrad(y).array() *
        X.array().unaryExpr([slope](T v) { return v >= T(0) ? T(1) : slope; });
  };
  return y;
}

template <typename T>
Var Tape<T>::Dropout(Var x, T rate, RngStream& rng, bool training) {
  CheckValid(x);
  if (!(rate >= T(0) && rate < T(1))) {
    throw Error(ErrorCode::kInvalidArgument, "dropout rate must be in [0,1)");
  }
  const Matrix<T>& X = value(x);
  if (!training || rate == T(0)) {
    Var y = Push(OpKind::kDropout, {x.id}, X, RequiresGrad(x));
    nodes_[y.id].backward = [this, x, y]() {
      if (RequiresGrad(x)) GradRef(x) += OutGrad(y);
    };
    return y;
  }
  auto mask = std::make_shared<Matrix<T>>(X.rows(), X.cols());
  const T keep_scale = T(1) / (T(1) - rate);
  T* m = mask->data();
  for (Eigen::Index i = 0; i < mask->size(); ++i) {
    m[i] = rng.Uniform() < static_cast<double>(rate) ? T(0) : keep_scale;
  }
  Matrix<T> out = X.cwiseProduct(*mask);
  Var y = Push(OpKind::kDropout, {x.id}, std::move(out), RequiresGrad(x));
  nodes_[y.id].backward = [this, x, y, mask]() {
    if (RequiresGrad(x)) GradRef(x) += OutGrad(y).cwiseProduct(*mask);
  };
  return y;
}

template <typename T>
Var Tape<T>::GatherRows(Var table, std::span<const int32_t> indices) {
  CheckValid(table);
  const Matrix<T>& X = value(table);
  auto idx = std::make_shared<std::vector<int32_t>>(indices.begin(),
                                                    indices.end());
  Matrix<T> out(static_cast<Eigen::Index>(idx->size()), X.cols());
  for (size_t i = 0; i < idx->size(); ++i) {
    int32_t r = (*idx)[i];
    if (r < 0 || r >= X.rows()) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "gather row " + std::to_string(r) + " of " +
                      std::to_string(X.rows()));
    }
    out.row(static_cast<Eigen::Index>(i)) = X.row(r);
  }
  Var y = Push(OpKind::kGatherRows, {table.id}, std::move(out),
               RequiresGrad(table));
  nodes_[y.id].backward = [this, table, y, idx]() {
    if (!RequiresGrad(table)) return;
    Matrix<T>& dX = GradRef(table);
    const Matrix<T>& dY = OutGrad(y);
    // Sequential scatter-add keeps duplicate-index sums in a fixed order.
    for (size_t i = 0; i < idx->size(); ++i) {
      dX.row((*idx)[i]) += dY.row(static_cast<Eigen::Index>(i));
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::SegmentSum(Var rows, std::shared_ptr<const Segments> segs) {
  CheckValid(rows);
  const Matrix<T>& X = value(rows);
  const int64_t S = segs->num_segments();
  if (S < 0 || segs->offsets.back() != static_cast<int64_t>(segs->index.size())) {
    throw Error(ErrorCode::kInvalidArgument, "segment offsets");
  }
  Matrix<T> out = Matrix<T>::Zero(S, X.cols());
  for (int64_t j = 0; j < S; ++j) {
    for (int64_t e = segs->offsets[j]; e < segs->offsets[j + 1]; ++e) {
      int32_t r = segs->index[e];
      if (r < 0 || r >= X.rows()) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    "segment row " + std::to_string(r));
      }
      out.row(j) += X.row(r);
    }
  }
  Var y = Push(OpKind::kSegmentSum, {rows.id}, std::move(out),
               RequiresGrad(rows));
  nodes_[y.id].backward = [this, rows, y, segs]() {
    if (!RequiresGrad(rows)) return;
    Matrix<T>& dX = GradRef(rows);
    const Matrix<T>& dY = OutGrad(y);
    for (int64_t j = 0; j < segs->num_segments(); ++j) {
      for (int64_t e = segs->offsets[j]; e < segs->offsets[j + 1]; ++e) {
        dX.row(segs->index[e]) += dY.row(j);
      }
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::WeightedSegmentSum(
    Var rows, std::shared_ptr<const WeightedSegments<T>> ws) {
  CheckValid(rows);
  const Matrix<T>& X = value(rows);
  const Segments& segs = ws->segments;
  const int64_t S = segs.num_segments();
  if (S < 0 || segs.offsets.back() != static_cast<int64_t>(segs.index.size()) ||
      ws->weight.size() != segs.index.size()) {
    throw Error(ErrorCode::kInvalidArgument, "weighted segment table");
  }
  Matrix<T> out = Matrix<T>::Zero(S, X.cols());
  for (int64_t j = 0; j < S; ++j) {
    for (int64_t e = segs.offsets[j]; e < segs.offsets[j + 1]; ++e) {
      int32_t r = segs.index[e];
      if (r < 0 || r >= X.rows()) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    "segment row " + std::to_string(r));
      }
      out.row(j) += ws->weight[e] * X.row(r);
    }
  }
  Var y = Push(OpKind::kWeightedSegmentSum, {rows.id}, std::move(out),
               RequiresGrad(rows));
  nodes_[y.id].backward = [this, rows, y, ws]() {
    if (!RequiresGrad(rows)) return;
    Matrix<T>& dX = GradRef(rows);
    const Matrix<T>& dY = OutGrad(y);
    const Segments& segs = ws->segments;
    for (int64_t j = 0; j < segs.num_segments(); ++j) {
      for (int64_t e = segs.offsets[j]; e < segs.offsets[j + 1]; ++e) {
        dX.row(segs.index[e]) += ws->weight[e] * dY.row(j);
      }
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::Reshape(Var x, int64_t rows, int64_t cols) {
  CheckValid(x);
  const Matrix<T>& X = value(x);
  if (rows * cols != X.size()) {
    throw Error(ErrorCode::kShapeMismatch, "reshape size");
  }
  Matrix<T> out = Eigen::Map<const Matrix<T>>(X.data(), rows, cols);
  Var y = Push(OpKind::kReshape, {x.id}, std::move(out), RequiresGrad(x));
  nodes_[y.id].backward = [this, x, y]() {
    if (!RequiresGrad(x)) return;
    Matrix<T>& dX = GradRef(x);
    const Matrix<T>& dY = OutGrad(y);
    Eigen::Map<Matrix<T>>(dX.data(), dY.rows(), dY.cols()) += dY;
  };
  return y;
}

template <typename T>
Var Tape<T>::ScaleRows(Var x, std::vector<T> weights) {
  CheckValid(x);
  const Matrix<T>& X = value(x);
  if (static_cast<Eigen::Index>(weights.size()) != X.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "scale rows: weight count");
  }
  auto w = std::make_shared<Eigen::Matrix<T, Eigen::Dynamic, 1>>(
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
          weights.data(), static_cast<Eigen::Index>(weights.size())));
  Matrix<T> out = w->asDiagonal() * X;
  Var y = Push(OpKind::kScaleRows, {x.id}, std::move(out), RequiresGrad(x));
  nodes_[y.id].backward = [this, x, y, w]() {
    if (RequiresGrad(x)) GradRef(x) += w->asDiagonal() * OutGrad(y);
  };
  return y;
}

template <typename T>
Var Tape<T>::ConcatCols(Var a, Var b) {
  CheckValid(a);
  CheckValid(b);
  const Matrix<T>& A = value(a);
  const Matrix<T>& B = value(b);
  if (A.rows() != B.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "concat: row counts differ");
  }
  Matrix<T> out(A.rows(), A.cols() + B.cols());
  out.leftCols(A.cols()) = A;
  out.rightCols(B.cols()) = B;
  const Eigen::Index ca = A.cols();
  const Eigen::Index cb = B.cols();
  Var y = Push(OpKind::kConcatCols, {a.id, b.id}, std::move(out),
               RequiresGrad(a) || RequiresGrad(b));
  nodes_[y.id].backward = [this, a, b, y, ca, cb]() {
    const Matrix<T>& dY = OutGrad(y);
    if (RequiresGrad(a)) GradRef(a) += dY.leftCols(ca);
    if (RequiresGrad(b)) GradRef(b) += dY.rightCols(cb);
  };
  return y;
}

template <typename T>
Var Tape<T>::RowDot(Var a, Var b) {
  CheckValid(a);
  CheckValid(b);
  const Matrix<T>& A = value(a);
  const Matrix<T>& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "row dot: operand shapes differ");
  }
  Matrix<T> out = A.cwiseProduct(B).rowwise().sum();
  Var y = Push(OpKind::kRowDot, {a.id, b.id}, std::move(out),
               RequiresGrad(a) || RequiresGrad(b));
  nodes_[y.id].backward = [this, a, b, y]() {
    const Matrix<T>& dY = OutGrad(y);
    if (RequiresGrad(a)) {
      GradRef(a) += dY.col(0).asDiagonal() * value(b);
    }
    if (RequiresGrad(b)) {
      GradRef(b) += dY.col(0).asDiagonal() * value(a);
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::Add(Var a, Var b) {
  CheckValid(a);
  CheckValid(b);
  const Matrix<T>& A = value(a);
  const Matrix<T>& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "add: operand shapes differ");
  }
  Var y = Push(OpKind::kAdd, {a.id, b.id}, A + B,
               RequiresGrad(a) || RequiresGrad(b));
  nodes_[y.id].backward = [this, a, b, y]() {
    if (RequiresGrad(a)) GradRef(a) += OutGrad(y);
    if (RequiresGrad(b)) GradRef(b) += OutGrad(y);
  };
  return y;
}

template <typename T>
Var Tape<T>::Sub(Var a, Var b) {
  CheckValid(a);
  CheckValid(b);
  const Matrix<T>& A = value(a);
  const Matrix<T>& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "sub: operand shapes differ");
  }
  Var y = Push(OpKind::kSub, {a.id, b.id}, A - B,
               RequiresGrad(a) || RequiresGrad(b));
  nodes_[y.id].backward = [this, a, b, y]() {
    if (RequiresGrad(a)) GradRef(a) += OutGrad(y);
    if (RequiresGrad(b)) GradRef(b) -= OutGrad(y);
  };
  return y;
}

template <typename T>
Var Tape<T>::Scale(Var a, T c) {
  CheckValid(a);
  Var y = Push(OpKind::kScale, {a.id}, value(a) * c, RequiresGrad(a));
  nodes_[y.id].backward = [this, a, y, c]() {
    if (RequiresGrad(a)) GradRef(a) += c * OutGrad(y);
  };
  return y;
}

template <typename T>
Var Tape<T>::SumSquares(Var a) {
  CheckValid(a);
  Matrix<T> out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  Var y = Push(OpKind::kSumSquares, {a.id}, std::move(out), RequiresGrad(a));
  nodes_[y.id].backward = [this, a, y]() {
    if (RequiresGrad(a)) GradRef(a) += (T(2) * OutGrad(y)(0, 0)) * value(a);
  };
  return y;
}

template <typename T>
void Tape<T>::Backward(Var loss) {
  CheckValid(loss);
  ensureRecording();
  const Matrix<T>& L = value(loss);
  if (L.rows() != 1 || L.cols() != 1) {
    throw Error(ErrorCode::kNotScalarLoss,
                "loss has shape " + std::to_string(L.rows()) + "x" +
                    std::to_string(L.cols()));
  }
  backward_done_ = true;
  if (!RequiresGrad(loss)) return;
  GradRef(loss)(0, 0) += T(1);
  for (int32_t i = loss.id; i >= 0; --i) {
    const Slot& s = slots_[i];
    if (!s.requires_grad || s.param || !s.has_grad) continue;
    if (nodes_[i].backward) nodes_[i].backward();
  }
}

template <typename T>
void Tape<T>::Reset() {
  slots_.clear();
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace stargcn

#endif  // STARGCN_TAPE_H_
