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

#include "isonet/isolation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace isonet {

void ConvergenceConfig::Validate() const {
  if (stability_window < 1) throw std::invalid_argument("E_stab must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
  if (source_eval_subsample && *source_eval_subsample < 1) {
    throw std::invalid_argument("source_eval_subsample must be >= 1");
  }
}

ConvergenceState::ConvergenceState(int stability_window)
    : window_(stability_window) {
  if (window_ < 1) throw std::invalid_argument("E_stab must be >= 1");
  history_.reserve(window_);
}

void ConvergenceState::RecordTargetScore(float score) {
  if (static_cast<int>(history_.size()) == window_) {
    history_.erase(history_.begin());
  }
  history_.push_back(score);
  ++updates_;
}

bool ConvergenceState::TargetStable() const {
  if (updates_ < window_) return false;
  return std::all_of(history_.begin(), history_.end(),
                     [](float p) { return p > 0.5f; });
}

SourceEvaluator::SourceEvaluator(const Dataset& source,
                                 std::optional<int> subsample,
                                 std::uint64_t seed)
    : source_(&source), indices_(source.size()) {
  if (source.empty()) throw std::invalid_argument("empty source dataset");
  std::iota(indices_.begin(), indices_.end(), std::size_t{0});
  if (subsample && static_cast<std::size_t>(*subsample) < indices_.size()) {
    Rng rng(seed);
    std::shuffle(indices_.begin(), indices_.end(), rng);
    indices_.resize(*subsample);
    std::sort(indices_.begin(), indices_.end());
  }
}

double SourceEvaluator::Accuracy(const NetworkSpec& spec,
                                 const ParameterVector& params) const {
  ForwardTrace<float> scratch;
  std::size_t correct = 0;
  for (std::size_t i : indices_) {
    if (BinaryProbability(spec, params, (*source_)[i].pixels, scratch) <= 0.5f) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices_.size());
}

ConvergenceStatus CheckConvergence(ConvergenceState& state,
                                   const NetworkSpec& spec,
                                   const ParameterVector& params,
                                   std::span<const float> target,
                                   const SourceEvaluator& source,
                                   const ConvergenceConfig& config,
                                   std::optional<double>* source_accuracy) {
  ForwardTrace<float> scratch;
  state.RecordTargetScore(BinaryProbability(spec, params, target, scratch));
  if (!state.TargetStable()) return ConvergenceStatus::kNotConverged;
  const double acc = source.Accuracy(spec, params);
  if (source_accuracy) *source_accuracy = acc;
  return acc >= config.tau ? ConvergenceStatus::kConverged
                           : ConvergenceStatus::kNotConverged;
}

std::optional<int> FirstConvergence(std::span<const float> target_scores,
                                    std::span<const double> source_accuracy,
                                    int stability_window, double tau) {
  if (target_scores.size() != source_accuracy.size()) {
    throw std::invalid_argument("trajectory lengths differ");
  }
  int run = 0;  // consecutive scores > 0.5 ending at k
  for (std::size_t i = 0; i < target_scores.size(); ++i) {
    run = target_scores[i] > 0.5f ? run + 1 : 0;
    const int k = static_cast<int>(i) + 1;
    if (k >= stability_window && run >= stability_window &&
        source_accuracy[i] >= tau) {
      return k;
    }
  }
  return std::nullopt;
}

double CentralizedLoss(const NetworkSpec& spec, const ParameterVector& params,
                       const IsolationBatch& batch) {
  if (batch.source.empty() || batch.replicas < 1) {
    throw std::invalid_argument("isolation batch needs |B_s| >= 1 and N >= 1");
  }
  ForwardTrace<float> scratch;
  double total = 0.0;
  for (std::span<const float> x : batch.source) {
    total += BinaryCrossEntropy(BinaryProbability(spec, params, x, scratch), 0);
  }
  total += batch.replicas *
           BinaryCrossEntropy(BinaryProbability(spec, params, batch.target, scratch), 1);
  return total / static_cast<double>(batch.source.size() + batch.replicas);
}

ParameterVector CentralizedGradient(const NetworkSpec& spec,
                                    const ParameterVector& params,
                                    const IsolationBatch& batch) {
  if (batch.source.empty() || batch.replicas < 1) {
    throw std::invalid_argument("isolation batch needs |B_s| >= 1 and N >= 1");
  }
  // Replica expansion: the target appears N times in the mini-batch.
  std::vector<Example> expanded;
  expanded.reserve(batch.source.size() + batch.replicas);
  for (std::span<const float> x : batch.source) expanded.push_back({x, 0});
  for (int i = 0; i < batch.replicas; ++i) expanded.push_back({batch.target, 1});
  return Gradient(spec, params, expanded);
}

ParameterVector InitializeIsolationNetwork(const NetworkSpec& spec,
                                           const ParameterVector& pretrained,
                                           std::uint64_t head_seed) {
  NetworkSpec head_spec = spec;
  head_spec.seed = head_seed;
  ParameterVector params = InitParams(head_spec, HeadKind::kBinary);
  const ParameterLayout& target = params.layout();
  const ParameterLayout& source = pretrained.layout();
  const bool compatible =
      source.feature_size() == target.feature_size() &&
      std::equal(target.segments().begin(),
                 target.segments().end() - 2, source.segments().begin(),
                 source.segments().end() - 2);
  if (!compatible) {
    throw std::invalid_argument(
        "pretrained feature extractor does not match the network spec");
  }
  std::copy_n(pretrained.values().begin(), target.feature_size(),
              params.mutable_values().begin());
  return params;
}

IsolationSeeds IsolationSeeds::Derive(std::uint64_t base,
                                      std::uint64_t target_index) {
  return IsolationSeeds{
      DeriveSeed(base, target_index, StreamTag::kHeadInit),
      DeriveSeed(base, target_index, StreamTag::kSourceBatches),
      DeriveSeed(base, target_index, StreamTag::kTargetAugment),
      DeriveSeed(base, target_index, StreamTag::kSourceEval),
  };
}

SourceBatchStream::SourceBatchStream(const Dataset& source,
                                     const AugmentPolicy& policy,
                                     std::uint64_t seed)
    : source_(&source),
      policy_(policy),
      augment_(policy.AppliesToSource()),
      sampler_(source.size()),
      rng_(seed) {}

SourceBatchStream::Batch SourceBatchStream::Next(int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  Batch batch;
  batch.inputs.reserve(batch_size);
  batch.labels.reserve(batch_size);
  for (std::size_t i : sampler_.Next(batch_size, rng_)) {
    const Sample& s = (*source_)[i];
    std::vector<float> x(s.pixels.size());
    if (augment_) {
      AugmentInto(s.pixels, x, source_->patch_size, policy_, rng_);
    } else {
      std::copy(s.pixels.begin(), s.pixels.end(), x.begin());
    }
    batch.inputs.push_back(std::move(x));
    batch.labels.push_back(s.label);
  }
  return batch;
}

TargetStream::TargetStream(std::span<const float> target, int patch_size,
                           const AugmentPolicy& policy, std::uint64_t seed)
    : target_(target.begin(), target.end()),
      buffer_(target.size()),
      patch_size_(patch_size),
      policy_(policy),
      augment_(policy.AppliesToTarget()),
      rng_(seed) {
  if (static_cast<std::size_t>(patch_size) * patch_size != target.size()) {
    throw std::invalid_argument("target does not match the patch size");
  }
}

std::span<const float> TargetStream::Next() {
  if (!augment_) return target_;
  AugmentInto(target_, buffer_, patch_size_, policy_, rng_);
  return buffer_;
}

void IsolationOptions::Validate() const {
  optimizer.Validate();
  augment.Validate();
  convergence.Validate();
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (replicas < 1) throw std::invalid_argument("replica count N must be >= 1");
}

IsolationResult RunCentralized(const NetworkSpec& spec,
                               const ParameterVector& pretrained,
                               const Dataset& source,
                               std::span<const float> target,
                               const IsolationOptions& options,
                               const IsolationSeeds& seeds,
                               const CentralizedHooks& hooks) {
  options.Validate();
  if (source.empty()) throw std::invalid_argument("empty source dataset");
  const ConvergenceConfig& conv = options.convergence;

  IsolationResult result;
  ParameterVector params = InitializeIsolationNetwork(spec, pretrained, seeds.head_init);
  Optimizer optimizer(options.optimizer, params.size());
  SourceBatchStream batches(source, options.augment, seeds.source_batches);
  TargetStream target_stream(target, source.patch_size, options.augment,
                             seeds.target_augment);
  SourceEvaluator evaluator(source, conv.source_eval_subsample, seeds.source_eval);
  ConvergenceState state(conv.stability_window);
  ForwardTrace<float> scratch;

  for (int k = 1; k <= conv.max_rounds; ++k) {
    const SourceBatchStream::Batch b = batches.Next(options.batch_size);
    IsolationBatch batch;
    for (const auto& x : b.inputs) batch.source.emplace_back(x);
    batch.target = target_stream.Next();
    batch.replicas = options.replicas;
    optimizer.Step(params, CentralizedGradient(spec, params, batch));
    if (hooks.on_step) hooks.on_step(k, params);

    RoundRecord rec;
    rec.round = k;
    rec.target_score = BinaryProbability(spec, params, target, scratch);
    state.RecordTargetScore(rec.target_score);
    rec.target_stable = state.TargetStable();
    if (rec.target_stable || hooks.evaluate_source_every_step) {
      rec.source_accuracy = evaluator.Accuracy(spec, params);
      rec.source_converged = *rec.source_accuracy >= conv.tau;
    }
    rec.checksum = params.Checksum();
    result.trajectory.push_back(rec);
    if (rec.target_stable && rec.source_converged) {
      result.score = k;
      result.censored = false;
      result.final_params = std::move(params);
      return result;
    }
  }
  result.score = conv.max_rounds;
  result.censored = true;
  result.final_params = std::move(params);
  return result;
}

}  // namespace isonet
