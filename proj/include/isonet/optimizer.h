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

#ifndef ISONET_OPTIMIZER_H_
#define ISONET_OPTIMIZER_H_

#include <cstddef>
#include <string_view>
#include <vector>

#include "isonet/nn.h"

namespace isonet {

enum class OptimizerKind { kSgd, kSgdMomentum, kAdam };

std::string_view OptimizerKindName(OptimizerKind kind);
OptimizerKind ParseOptimizerKind(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  float learning_rate = 1e-3f;
  float momentum = 0.9f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;

  void Validate() const;
};

// Stateful first-order optimizer. Momentum uses v <- mu v + g, theta -= lr v.
// Adam uses bias-corrected first and second moments.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t num_params);

  void Step(ParameterVector& params, const ParameterVector& grad);

  const OptimizerConfig& config() const { return config_; }
  long steps() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<float> first_;
  std::vector<float> second_;
  long steps_ = 0;
};

}  // namespace isonet

#endif  // ISONET_OPTIMIZER_H_
