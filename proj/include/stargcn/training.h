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

#ifndef STARGCN_TRAINING_H_
#define STARGCN_TRAINING_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stargcn/model.h"
#include "stargcn/rating_graph.h"
#include "stargcn/rng.h"
#include "stargcn/tape.h"

namespace stargcn {

struct TrainConfig {
  int batch_size = 10000;
  double mask_fraction = 0.1;  // P_m
  double zero_prob = 0.0;      // p_z
  double initial_lr = 0.002;
  double min_lr = 0.0005;
  double decay_factor = 0.5;
  int plateau_window = 100;
  int early_stop_window = 150;
  double grad_clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_iterations = 10000;
  int valid_every = 10;
  uint64_t seed = 0;
  bool remove_sampled_edges = true;

  // Masking presets: transductive P_m=0.1, p_z=0; inductive P_m=0.4, p_z=1.
  static TrainConfig Transductive();
  static TrainConfig Inductive();

  void Validate() const;
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
struct AdamState {
  std::vector<Matrix<T>> m;
  std::vector<Matrix<T>> v;
  int64_t step = 0;

  static AdamState ForParams(const ParameterStore<T>& params);
};

struct BatchSample {
  std::vector<EdgeId> edge_ids;
  MaskPlan mask;
  NodeBatch field;
};

// Nodes within `depth` hops (any level) of the seeds, seeds included.
// Output lists are sorted.
NodeBatch ReceptiveField(const RatingGraph& graph,
                         std::span<const int32_t> seed_users,
                         std::span<const int32_t> seed_items, int depth);

// Draws batches of distinct edges uniformly and builds their mask plans.
class BatchSampler {
 public:
  BatchSampler(const RatingGraph& graph, const TrainConfig& config,
               int depth);

  BatchSample Next(RngStream& rng);

 private:
  const RatingGraph* graph_;
  TrainConfig config_;
  int depth_;
  std::vector<EdgeId> pool_;
};

// Mean squared error; throws EmptyBatch.
double RatingLoss(std::span<const double> predictions,
                  std::span<const double> truths);

// Masked reconstruction loss over global node rows of x / x_hat. Each side
// contributes (1 / 2|masked|) * sum ||x - x_hat||^2, or 0 when empty.
template <typename T>
double ReconstructionLoss(const Matrix<T>& x_users, const Matrix<T>& xhat_users,
                          const Matrix<T>& x_items, const Matrix<T>& xhat_items,
                          const MaskPlan& plan);

// Rescales every gradient so the global L2 norm is at most max_norm.
// Returns the applied scale.
template <typename T>
double ClipGradients(std::vector<Parameter<T>>& params, double max_norm);

template <typename T>
double GlobalGradNorm(const std::vector<Parameter<T>>& params);

template <typename T>
void AdamUpdate(std::vector<Parameter<T>>& params, AdamState<T>& state,
                double lr, const TrainConfig& config);

struct StepResult {
  std::vector<double> rating_loss;  // per block
  std::vector<double> recon_loss;   // per block
  double total = 0.0;
  double grad_norm = 0.0;
  double clip_scale = 1.0;
};

struct TrainHooks {
  // Sees each batch before its forward pass.
  std::function<void(const BatchSample&)> on_batch;
  // Sees every edge visible to a training forward pass.
  std::function<void(EdgeId)> on_visible_edge;
};

// One sample-and-remove step: forward on the masked view, combined loss,
// backward, clip, Adam. Throws NonFiniteLoss on divergence.
template <typename T>
StepResult TrainStep(ParameterStore<T>& params, const ModelSpec& spec,
                     const FeatureSet<T>& features, const RatingGraph& graph,
                     const BatchSample& sample, const TrainConfig& config,
                     AdamState<T>& adam, double lr, RngStream& rng,
                     const TrainHooks* hooks = nullptr);

// Loss-only variant of TrainStep's forward, used for gradient checks and
// loss decomposition. Gradients are left in params when backward is set.
template <typename T>
StepResult ComputeLoss(ParameterStore<T>& params, const ModelSpec& spec,
                       const FeatureSet<T>& features, const RatingGraph& graph,
                       const BatchSample& sample, const TrainConfig& config,
                       RngStream& rng, bool training, bool backward,
                       const TrainHooks* hooks = nullptr);

struct TrainingRecord {
  int iteration = 0;
  std::vector<double> rating_loss;
  std::vector<double> recon_loss;
  double valid_rmse = 0.0;
  double lr = 0.0;

  // One line of the training log, e.g.
  // {"iteration":10,"rating_loss":[..],"recon_loss":[..],"valid_rmse":..,"lr":..}
  std::string ToJson() const;
};

template <typename T>
struct TrainingResult {
  ParameterStore<T> best;
  double best_valid_rmse = 0.0;
  int best_iteration = 0;
  int iterations_run = 0;
  bool early_stopped = false;
  std::vector<TrainingRecord> log;
  RngStream rng;
};

template <typename T>
using Validator = std::function<double(ParameterStore<T>&)>;

// Validation RMSE on the full training graph, masking and dropout off,
// predictions clamped to the rating range.
template <typename T>
Validator<T> MakeValidator(const ModelSpec& spec, const FeatureSet<T>& features,
                           const RatingGraph& graph,
                           std::vector<Rating> valid_set);

template <typename T>
TrainingResult<T> RunTraining(ParameterStore<T> params, const ModelSpec& spec,
                              const FeatureSet<T>& features,
                              const RatingGraph& graph,
                              const Validator<T>& validator,
                              const TrainConfig& config,
                              const TrainHooks* hooks = nullptr);

// Keeps freed heap pages mapped so per-iteration buffers are reused rather
// than returned to the OS (glibc only; a no-op elsewhere).
void RetainHeapMemory();

}  // namespace stargcn

#endif  // STARGCN_TRAINING_H_
