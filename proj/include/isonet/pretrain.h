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

#ifndef ISONET_PRETRAIN_H_
#define ISONET_PRETRAIN_H_

#include <cstdint>
#include <vector>

#include "isonet/data.h"
#include "isonet/nn.h"
#include "isonet/optimizer.h"

namespace isonet {

// Training of the primary C-class model M_pre on the source training split.
struct PretrainConfig {
  NetworkSpec spec;
  int epochs = 50;
  int batch_size = 32;
  OptimizerConfig optimizer{OptimizerKind::kAdam, 1e-3f};
  std::uint64_t seed = 0;

  void Validate() const;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;  // on the full training set after the epoch
};

struct PretrainResult {
  ParameterVector params;
  std::vector<EpochLog> log;
};

// Minibatch multiclass cross-entropy training. Refuses samples flagged OOD so
// test splits cannot leak into pre-training.
PretrainResult Pretrain(const PretrainConfig& config, const Dataset& train);

// Fraction of samples whose argmax prediction equals the label.
double EvaluateAccuracy(const NetworkSpec& spec, const ParameterVector& params,
                        const Dataset& dataset);

}  // namespace isonet

#endif  // ISONET_PRETRAIN_H_
