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

#include "stargcn/training.h"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "json.hpp"
#include "stargcn/error.h"
#include "stargcn/evaluation.h"

namespace stargcn {

namespace {

constexpr Side kSides[2] = {Side::kUser, Side::kItem};

}  // namespace

TrainConfig TrainConfig::Transductive() {
  TrainConfig c;
  c.mask_fraction = 0.1;
  c.zero_prob = 0.0;
  return c;
}

TrainConfig TrainConfig::Inductive() {
  TrainConfig c;
  c.mask_fraction = 0.4;
  c.zero_prob = 1.0;
  return c;
}

void TrainConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, what);
  };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) {
    fail("mask fraction must be in [0,1]");
  }
  if (!(zero_prob >= 0.0 && zero_prob <= 1.0)) fail("zero prob must be in [0,1]");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
    fail("decay factor must be in (0,1)");
  }
  if (!(min_lr <= initial_lr)) fail("min_lr must not exceed initial_lr");
  if (!(grad_clip_norm > 0.0)) fail("grad clip norm must be positive");
  if (plateau_window < 1 || early_stop_window < 1 || valid_every < 1) {
    fail("windows must be positive");
  }
  if (max_iterations < 0) fail("max_iterations must be >= 0");
}

template <typename T>
AdamState<T> AdamState<T>::ForParams(const ParameterStore<T>& params) {
  AdamState<T> s;
  for (const auto& p : params.params) {
    s.m.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

NodeBatch ReceptiveField(const RatingGraph& graph,
                         std::span<const int32_t> seed_users,
                         std::span<const int32_t> seed_items, int depth) {
  std::vector<char> in_field[2] = {
      std::vector<char>(graph.num_users(), 0),
      std::vector<char>(graph.num_items(), 0)};
  std::vector<NodeRef> frontier;
  auto visit = [&](NodeRef n, std::vector<NodeRef>& into) {
    auto& flag = in_field[static_cast<int>(n.side)];
    if (n.index < 0 || n.index >= static_cast<int32_t>(flag.size())) {
      throw Error(ErrorCode::kIndexOutOfRange, "receptive field seed");
    }
    if (flag[n.index]) return;
    flag[n.index] = 1;
    into.push_back(n);
  };
  for (int32_t u : seed_users) visit({Side::kUser, u}, frontier);
  for (int32_t v : seed_items) visit({Side::kItem, v}, frontier);
  for (int hop = 0; hop < depth && !frontier.empty(); ++hop) {
    std::vector<NodeRef> next;
    for (NodeRef n : frontier) {
      for (int r = 0; r < graph.num_levels(); ++r) {
        for (const Neighbor& nb : graph.Neighbors(n, r)) {
          visit({Opposite(n.side), nb.node}, next);
        }
      }
    }
    frontier = std::move(next);
  }
  std::vector<int32_t> users, items;
  for (int32_t i = 0; i < graph.num_users(); ++i) {
    if (in_field[0][i]) users.push_back(i);
  }
  for (int32_t i = 0; i < graph.num_items(); ++i) {
    if (in_field[1][i]) items.push_back(i);
  }
  return NodeBatch::FromNodes(std::move(users), std::move(items),
                              graph.num_users(), graph.num_items());
}

BatchSampler::BatchSampler(const RatingGraph& graph, const TrainConfig& config,
                           int depth)
    : graph_(&graph), config_(config), depth_(depth) {
  pool_.resize(graph.num_edges());
  for (EdgeId i = 0; i < graph.num_edges(); ++i) pool_[i] = i;
}

BatchSample BatchSampler::Next(RngStream& rng) {
  if (pool_.empty()) throw Error(ErrorCode::kEmptyGraph, "no edges to sample");
  const size_t n = pool_.size();
  const size_t k = std::min(n, static_cast<size_t>(config_.batch_size));
  BatchSample sample;
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(rng.Below(n - i));
    std::swap(pool_[i], pool_[j]);
  }
  sample.edge_ids.assign(pool_.begin(), pool_.begin() + k);
  std::sort(sample.edge_ids.begin(), sample.edge_ids.end());

  std::vector<int32_t> users, items;
  for (EdgeId id : sample.edge_ids) {
    users.push_back(graph_->edge(id).user);
    items.push_back(graph_->edge(id).item);
  }
  NodeBatch core = ReceptiveField(*graph_, users, items, depth_);

  MaskPlan& plan = sample.mask;
  for (Side s : kSides) {
    std::vector<int32_t> pool = core.nodes(s);
    const auto count = static_cast<size_t>(
        std::llround(config_.mask_fraction * static_cast<double>(pool.size())));
    for (size_t i = 0; i < count; ++i) {
      size_t j = i + static_cast<size_t>(rng.Below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<int32_t> masked(pool.begin(), pool.begin() + count);
    std::sort(masked.begin(), masked.end());
    std::vector<int32_t> zeroed;
    for (int32_t node : masked) {
      if (config_.zero_prob > 0.0 && rng.Bernoulli(config_.zero_prob)) {
        zeroed.push_back(node);
      }
    }
    if (s == Side::kUser) {
      plan.masked_users = std::move(masked);
      plan.zeroed_users = std::move(zeroed);
    } else {
      plan.masked_items = std::move(masked);
      plan.zeroed_items = std::move(zeroed);
    }
  }
  // Extend the field so reconstruction targets see their full neighborhood.
  users.insert(users.end(), plan.masked_users.begin(), plan.masked_users.end());
  items.insert(items.end(), plan.masked_items.begin(), plan.masked_items.end());
  sample.field = ReceptiveField(*graph_, users, items, depth_);
  return sample;
}

double RatingLoss(std::span<const double> predictions,
                  std::span<const double> truths) {
  if (predictions.empty() || predictions.size() != truths.size()) {
    throw Error(ErrorCode::kEmptyBatch, "rating loss needs equal, nonempty inputs");
  }
  double s = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    double d = truths[i] - predictions[i];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

template <typename T>
double ReconstructionLoss(const Matrix<T>& x_users, const Matrix<T>& xhat_users,
                          const Matrix<T>& x_items, const Matrix<T>& xhat_items,
                          const MaskPlan& plan) {
  auto side = [](const Matrix<T>& x, const Matrix<T>& xh,
                 const std::vector<int32_t>& masked) {
    if (masked.empty()) return 0.0;
    double s = 0.0;
    for (int32_t n : masked) {
      s += static_cast<double>((x.row(n) - xh.row(n)).squaredNorm());
    }
    return s / (2.0 * static_cast<double>(masked.size()));
  };
  return side(x_users, xhat_users, plan.masked_users) +
         side(x_items, xhat_items, plan.masked_items);
}

template <typename T>
double GlobalGradNorm(const std::vector<Parameter<T>>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.grad.size() == 0) continue;
    sq += static_cast<double>(p.grad.squaredNorm());
  }
  return std::sqrt(sq);
}

template <typename T>
double ClipGradients(std::vector<Parameter<T>>& params, double max_norm) {
  if (!(max_norm > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "max_norm must be positive");
  }
  const double norm = GlobalGradNorm(params);
  const double scale = norm > max_norm ? max_norm / norm : 1.0;
  if (scale < 1.0) {
    for (auto& p : params) p.grad *= static_cast<T>(scale);
  }
  return scale;
}

template <typename T>
void AdamUpdate(std::vector<Parameter<T>>& params, AdamState<T>& state,
                double lr, const TrainConfig& config) {
  if (state.m.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam state does not match params");
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const T step = static_cast<T>(lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(config.adam_eps);
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    if (p.grad.size() == 0) continue;
    state.m[i] = static_cast<T>(b1) * state.m[i] + static_cast<T>(1.0 - b1) * p.grad;
    state.v[i] = static_cast<T>(b2) * state.v[i] +
                 static_cast<T>(1.0 - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step * state.m[i].array() /
                       ((state.v[i].array() * inv_c2).sqrt() + eps);
  }
}

template <typename T>
StepResult ComputeLoss(ParameterStore<T>& params, const ModelSpec& spec,
                       const FeatureSet<T>& features, const RatingGraph& graph,
                       const BatchSample& sample, const TrainConfig& config,
                       RngStream& rng, bool training, bool backward,
                       const TrainHooks* hooks) {
  if (sample.edge_ids.empty()) {
    throw Error(ErrorCode::kEmptyBatch, "batch has no edges");
  }
  EdgeMaskView view = config.remove_sampled_edges
                          ? MaskEdges(graph, sample.edge_ids)
                          : EdgeMaskView(graph);
  if (hooks && hooks->on_visible_edge) {
    view.set_observer(hooks->on_visible_edge);
  }
  const NodeBatch& field = sample.field;
  LocalAdjacency<T> adj =
      BuildLocalAdjacency<T>(view, field, spec.effective_degrees);

  std::vector<LocalPair> pairs;
  Matrix<T> truth(static_cast<Eigen::Index>(sample.edge_ids.size()), 1);
  pairs.reserve(sample.edge_ids.size());
  for (size_t i = 0; i < sample.edge_ids.size(); ++i) {
    const Edge& e = graph.edge(sample.edge_ids[i]);
    pairs.push_back({field.Local({Side::kUser, e.user}),
                     field.Local({Side::kItem, e.item})});
    truth(static_cast<Eigen::Index>(i), 0) = static_cast<T>(e.value);
  }

  ForwardContext<T> ctx;
  ctx.spec = &spec;
  ctx.params = &params;
  ctx.features = &features;
  ctx.batch = &field;
  ctx.adjacency = &adj;
  ctx.training = training;
  ctx.rng = &rng;

  Tape<T> tape;
  ForwardVars fv = ForwardAllBlocks(tape, ctx, sample.mask, pairs);

  std::vector<int32_t> masked_local[2];
  for (Side s : kSides) {
    for (int32_t n : sample.mask.masked(s)) {
      int32_t local = field.Local({s, n});
      if (local < 0) {
        throw Error(ErrorCode::kIndexOutOfRange, "masked node outside field");
      }
      masked_local[static_cast<int>(s)].push_back(local);
    }
  }

  StepResult result;
  Var truth_var = tape.Constant(std::move(truth));
  const T inv_batch = static_cast<T>(1.0 / static_cast<double>(pairs.size()));
  Var total;
  auto accumulate = [&](Var term) {
    total = total.valid() ? tape.Add(total, term) : term;
  };
  for (int b = 0; b < spec.num_blocks; ++b) {
    const BlockVars& bv = fv.blocks[b];
    Var lt = tape.Scale(tape.SumSquares(tape.Sub(bv.prediction, truth_var)),
                        inv_batch);
    result.rating_loss.push_back(static_cast<double>(tape.scalar(lt)));
    accumulate(lt);

    double lr_value = 0.0;
    if (spec.reconstruction) {
      Var lr_var;
      for (int si = 0; si < 2; ++si) {
        const auto& idx = masked_local[si];
        if (idx.empty()) continue;
        Var diff = tape.Sub(tape.GatherRows(fv.inputs.clean[si], idx),
                            tape.GatherRows(bv.recon[si], idx));
        Var term = tape.Scale(tape.SumSquares(diff),
                              static_cast<T>(0.5 / static_cast<double>(idx.size())));
        lr_var = lr_var.valid() ? tape.Add(lr_var, term) : term;
      }
      if (lr_var.valid()) {
        lr_value = static_cast<double>(tape.scalar(lr_var));
        if (spec.lambda[b] != 0.0) {
          accumulate(tape.Scale(lr_var, static_cast<T>(spec.lambda[b])));
        }
      }
    }
    result.recon_loss.push_back(lr_value);
  }
  result.total = static_cast<double>(tape.scalar(total));
  if (backward) {
    if (!std::isfinite(result.total)) {
      std::string detail = "batch of " + std::to_string(pairs.size()) +
                           " edges; block rating losses:";
      for (double l : result.rating_loss) detail += " " + std::to_string(l);
      throw Error(ErrorCode::kNonFiniteLoss, detail);
    }
    params.ZeroGrad();
    tape.Backward(total);
  }
  return result;
}

template <typename T>
StepResult TrainStep(ParameterStore<T>& params, const ModelSpec& spec,
                     const FeatureSet<T>& features, const RatingGraph& graph,
                     const BatchSample& sample, const TrainConfig& config,
                     AdamState<T>& adam, double lr, RngStream& rng,
                     const TrainHooks* hooks) {
  if (hooks && hooks->on_batch) hooks->on_batch(sample);
  StepResult r = ComputeLoss(params, spec, features, graph, sample, config, rng,
                             /*training=*/true, /*backward=*/true, hooks);
  r.grad_norm = GlobalGradNorm(params.params);
  if (!std::isfinite(r.grad_norm)) {
    throw Error(ErrorCode::kNonFiniteLoss, "non-finite gradient norm");
  }
  r.clip_scale = ClipGradients(params.params, config.grad_clip_norm);
  AdamUpdate(params.params, adam, lr, config);
  return r;
}

std::string TrainingRecord::ToJson() const {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["rating_loss"] = rating_loss;
  j["recon_loss"] = recon_loss;
  j["valid_rmse"] = valid_rmse;
  j["lr"] = lr;
  return j.dump();
}

template <typename T>
Validator<T> MakeValidator(const ModelSpec& spec, const FeatureSet<T>& features,
                           const RatingGraph& graph,
                           std::vector<Rating> valid_set) {
  return [spec, features, &graph,
          valid = std::move(valid_set)](ParameterStore<T>& params) {
    if (valid.empty()) return 0.0;
    EdgeMaskView view(graph);
    std::vector<T> pred =
        PredictPairs(spec, params, features, view, MaskPlan{}, valid);
    std::vector<double> p(pred.begin(), pred.end()), t;
    t.reserve(valid.size());
    for (const Rating& r : valid) t.push_back(r.value);
    ClampPredictions(p, graph.levels());
    return Rmse(p, t);
  };
}

template <typename T>
TrainingResult<T> RunTraining(ParameterStore<T> params, const ModelSpec& spec,
                              const FeatureSet<T>& features,
                              const RatingGraph& graph,
                              const Validator<T>& validator,
                              const TrainConfig& config,
                              const TrainHooks* hooks) {
  config.Validate();
  spec.Validate();
  TrainingResult<T> result;
  result.rng = RngStream(config.seed);
  if (config.max_iterations == 0) {
    result.best = std::move(params);
    return result;
  }
  if (graph.num_edges() == 0) {
    throw Error(ErrorCode::kEmptyGraph, "training graph has no edges");
  }
  RngStream& rng = result.rng;
  AdamState<T> adam = AdamState<T>::ForParams(params);
  BatchSampler sampler(graph, config, spec.total_layers());
  double lr = config.initial_lr;

  result.best_valid_rmse = validator(params);
  result.best_iteration = 0;
  result.best = params;
  int plateau_anchor = 0;

  for (int it = 1; it <= config.max_iterations; ++it) {
    BatchSample sample = sampler.Next(rng);
    StepResult step = TrainStep(params, spec, features, graph, sample, config,
                                adam, lr, rng, hooks);
    result.iterations_run = it;
    if (it % config.valid_every != 0) continue;

    const double rmse = validator(params);
    TrainingRecord rec;
    rec.iteration = it;
    rec.rating_loss = step.rating_loss;
    rec.recon_loss = step.recon_loss;
    rec.valid_rmse = rmse;
    rec.lr = lr;
    result.log.push_back(rec);

    if (rmse < result.best_valid_rmse) {
      result.best_valid_rmse = rmse;
      result.best_iteration = it;
      result.best = params;
      plateau_anchor = it;
      continue;
    }
    if (it - plateau_anchor >= config.plateau_window) {
      lr = std::max(config.min_lr, lr * config.decay_factor);
      plateau_anchor = it;
    }
    if (it - result.best_iteration >= config.early_stop_window) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

void RetainHeapMemory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

#define STARGCN_INSTANTIATE_TRAINING(T)                                        \
  template struct AdamState<T>;                                                \
  template double ReconstructionLoss<T>(const Matrix<T>&, const Matrix<T>&,    \
                                        const Matrix<T>&, const Matrix<T>&,    \
                                        const MaskPlan&);                      \
  template double ClipGradients<T>(std::vector<Parameter<T>>&, double);        \
  template double GlobalGradNorm<T>(const std::vector<Parameter<T>>&);         \
  template void AdamUpdate<T>(std::vector<Parameter<T>>&, AdamState<T>&,       \
                              double, const TrainConfig&);                     \
  template StepResult TrainStep<T>(                                            \
      ParameterStore<T>&, const ModelSpec&, const FeatureSet<T>&,              \
      const RatingGraph&, const BatchSample&, const TrainConfig&,              \
      AdamState<T>&, double, RngStream&, const TrainHooks*);                   \
  template StepResult ComputeLoss<T>(                                          \
      ParameterStore<T>&, const ModelSpec&, const FeatureSet<T>&,              \
      const RatingGraph&, const BatchSample&, const TrainConfig&, RngStream&,  \
      bool, bool, const TrainHooks*);                                          \
  template Validator<T> MakeValidator<T>(const ModelSpec&,                     \
                                         const FeatureSet<T>&,                 \
                                         const RatingGraph&,                   \
                                         std::vector<Rating>);                 \
  template TrainingResult<T> RunTraining<T>(                                   \
      ParameterStore<T>, const ModelSpec&, const FeatureSet<T>&,               \
      const RatingGraph&, const Validator<T>&, const TrainConfig&,             \
      const TrainHooks*);

STARGCN_INSTANTIATE_TRAINING(float)
STARGCN_INSTANTIATE_TRAINING(double)

#undef STARGCN_INSTANTIATE_TRAINING

}  // namespace stargcn
