/*
 * Copyright 2026 The isonet Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Centralized isolation network: a binary classifier trained to separate one
// target input (label 1, replicated N times per mini-batch) from the source
// set (label 0). The number of optimizer steps until the convergence rule
// holds is the OOD score; in-distribution targets are harder to isolate and
// therefore score higher.

#ifndef ISONET_ISOLATION_H_
#define ISONET_ISOLATION_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "isonet/data.h"
#include "isonet/nn.h"
#include "isonet/optimizer.h"
#include "isonet/random.h"

namespace isonet {

struct ConvergenceConfig {
  int stability_window = 5;  // E_stab
  double tau = 0.85;         // required source accuracy
  int max_rounds = 100;      // score assigned when never converged
  // Evaluate the source criterion on a fixed random subset of this size.
  std::optional<int> source_eval_subsample;

  void Validate() const;
};

// Rolling window of the most recent target scores p^(j)(x_t).
class ConvergenceState {
 public:
  explicit ConvergenceState(int stability_window);

  void RecordTargetScore(float score);
  // All of the last `window` recorded scores are > 0.5, and at least
  // `window` scores have been recorded.
  bool TargetStable() const;

  int updates() const { return updates_; }
  std::span<const float> history() const { return history_; }

 private:
  int window_;
  std::vector<float> history_;  // oldest first, at most window_ entries
  int updates_ = 0;
};

// Fraction of source inputs the binary head assigns to the source side
// (p <= 0.5), optionally over a fixed seeded subsample.
class SourceEvaluator {
 public:
  SourceEvaluator(const Dataset& source, std::optional<int> subsample,
                  std::uint64_t seed);

  double Accuracy(const NetworkSpec& spec, const ParameterVector& params) const;
  std::size_t size() const { return indices_.size(); }

 private:
  const Dataset* source_;
  std::vector<std::size_t> indices_;
};

enum class ConvergenceStatus { kNotConverged, kConverged };

// Records p(x_t) under `params` and evaluates both criteria. Source accuracy
// is only computed once the target criterion holds; it is written to
// `source_accuracy` when computed.
ConvergenceStatus CheckConvergence(ConvergenceState& state,
                                   const NetworkSpec& spec,
                                   const ParameterVector& params,
                                   std::span<const float> target,
                                   const SourceEvaluator& source,
                                   const ConvergenceConfig& config,
                                   std::optional<double>* source_accuracy = nullptr);

// Smallest 1-based k >= window at which a recorded trajectory satisfies the
// rule. Missing (NaN) source accuracies count as not meeting tau.
std::optional<int> FirstConvergence(std::span<const float> target_scores,
                                    std::span<const double> source_accuracy,
                                    int stability_window, double tau);

struct IsolationBatch {
  std::vector<std::span<const float>> source;  // label 0
  std::span<const float> target;               // label 1
  int replicas = 1;                            // N
};

// Mean loss over the batch with the target replicated N times.
double CentralizedLoss(const NetworkSpec& spec, const ParameterVector& params,
                       const IsolationBatch& batch);
ParameterVector CentralizedGradient(const NetworkSpec& spec,
                                    const ParameterVector& params,
                                    const IsolationBatch& batch);

// Pretrained feature extractor with a freshly initialized binary head.
ParameterVector InitializeIsolationNetwork(const NetworkSpec& spec,
                                           const ParameterVector& pretrained,
                                           std::uint64_t head_seed);

// Seeds for every random stream of one isolation run.
struct IsolationSeeds {
  std::uint64_t head_init = 0;
  std::uint64_t source_batches = 0;
  std::uint64_t target_augment = 0;
  std::uint64_t source_eval = 0;

  static IsolationSeeds Derive(std::uint64_t base, std::uint64_t target_index);
};

// Fresh, optionally augmented source mini-batches. All draws (batch order and
// augmentation) come from one stream, so any two consumers constructed with
// the same seed see the same batches.
class SourceBatchStream {
 public:
  SourceBatchStream(const Dataset& source, const AugmentPolicy& policy,
                    std::uint64_t seed);

  struct Batch {
    std::vector<std::vector<float>> inputs;
    std::vector<int> labels;  // class labels, for inspection
  };
  Batch Next(int batch_size);

 private:
  const Dataset* source_;
  AugmentPolicy policy_;
  bool augment_;
  BatchSampler sampler_;
  Rng rng_;
};

// The single target input, re-augmented on every draw.
class TargetStream {
 public:
  TargetStream(std::span<const float> target, int patch_size,
               const AugmentPolicy& policy, std::uint64_t seed);

  std::span<const float> Next();

 private:
  std::vector<float> target_;
  std::vector<float> buffer_;
  int patch_size_;
  AugmentPolicy policy_;
  bool augment_;
  Rng rng_;
};

struct IsolationOptions {
  // Pre-training uses Adam; isolation defaults to plain SGD (see README).
  OptimizerConfig optimizer{OptimizerKind::kSgd, 1e-2f};
  int batch_size = 16;  // |B_s|
  int replicas = 4;     // N, centralized only
  AugmentPolicy augment;
  ConvergenceConfig convergence;

  void Validate() const;
};

struct RoundRecord {
  int round = 0;
  float target_score = 0.0f;
  std::optional<double> source_accuracy;
  bool target_stable = false;
  bool source_converged = false;
  std::uint32_t checksum = 0;
};

struct IsolationResult {
  int score = 0;
  bool censored = false;
  std::vector<RoundRecord> trajectory;
  ParameterVector final_params;
};

using StepObserver = std::function<void(int step, const ParameterVector&)>;

struct CentralizedHooks {
  StepObserver on_step;
  // Evaluate source accuracy after every step instead of only when the
  // target criterion holds (for recording full trajectories).
  bool evaluate_source_every_step = false;
};

// Runs until the convergence rule holds or max_rounds steps were taken.
// Throws std::invalid_argument on an empty source set.
IsolationResult RunCentralized(const NetworkSpec& spec,
                               const ParameterVector& pretrained,
                               const Dataset& source,
                               std::span<const float> target,
                               const IsolationOptions& options,
                               const IsolationSeeds& seeds,
                               const CentralizedHooks& hooks = {});

}  // namespace isonet

#endif  // ISONET_ISOLATION_H_
