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

#include "isonet/pretrain.h"

#include <stdexcept>
#include <string>

#include "isonet/dison.h"
#include "isonet/random.h"

namespace isonet {

void PretrainConfig::Validate() const {
  spec.Validate();
  optimizer.Validate();
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
}

PretrainResult Pretrain(const PretrainConfig& config, const Dataset& train) {
  config.Validate();
  if (train.empty()) throw std::invalid_argument("empty training set");
  if (train.input_dim() != config.spec.input_dim ||
      train.num_classes != config.spec.num_classes) {
    throw std::invalid_argument("training set does not match the network spec");
  }
  for (const Sample& s : train.samples) {
    if (s.ood) throw std::invalid_argument("training set contains OOD samples");
    if (s.label < 0 || s.label >= config.spec.num_classes) {
      throw std::invalid_argument("label " + std::to_string(s.label) + " out of range");
    }
  }

  NetworkSpec spec = config.spec;
  spec.seed = config.seed;
  PretrainResult result{InitParams(spec, HeadKind::kMulticlass), {}};
  Optimizer optimizer(config.optimizer, result.params.size());
  Rng rng(DeriveSeed(config.seed, 0, StreamTag::kPretrain));
  BatchSampler sampler(train.size());
  const std::size_t steps_per_epoch =
      (train.size() + config.batch_size - 1) / config.batch_size;

  std::vector<Example> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      batch.clear();
      for (std::size_t i : sampler.Next(config.batch_size, rng)) {
        batch.push_back({train[i].pixels, train[i].label});
      }
      LossAndGradient lg = LossGradient(config.spec, result.params, batch);
      loss_sum += lg.loss;
      optimizer.Step(result.params, lg.gradient);
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(steps_per_epoch),
                          EvaluateAccuracy(config.spec, result.params, train)});
  }
  return result;
}

double EvaluateAccuracy(const NetworkSpec& spec, const ParameterVector& params,
                        const Dataset& dataset) {
  if (dataset.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Sample& s : dataset.samples) {
    if (PredictClass(spec, params, s.pixels) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace isonet
