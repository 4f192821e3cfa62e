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

#include "isonet/optimizer.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace isonet {

std::string_view OptimizerKindName(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd:
      return "sgd";
    case OptimizerKind::kSgdMomentum:
      return "sgd_momentum";
    case OptimizerKind::kAdam:
      return "adam";
  }
  return "unknown";
}

OptimizerKind ParseOptimizerKind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

void OptimizerConfig::Validate() const {
  if (!(learning_rate >= 0.0f)) {
    throw std::invalid_argument("learning rate must be non-negative");
  }
  if (beta1 < 0.0f || beta1 >= 1.0f || beta2 < 0.0f || beta2 >= 1.0f) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t num_params)
    : config_(config) {
  config_.Validate();
  if (config_.kind != OptimizerKind::kSgd) first_.assign(num_params, 0.0f);
  if (config_.kind == OptimizerKind::kAdam) second_.assign(num_params, 0.0f);
}

void Optimizer::Step(ParameterVector& params, const ParameterVector& grad) {
  CheckSameLayout(params, grad);
  if (config_.kind != OptimizerKind::kSgd && first_.size() != params.size()) {
    throw std::invalid_argument("optimizer state does not match parameters");
  }
  ++steps_;
  std::span<float> theta = params.mutable_values();
  std::span<const float> g = grad.values();
  const float lr = config_.learning_rate;

  switch (config_.kind) {
    case OptimizerKind::kSgd:
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
      break;
    case OptimizerKind::kSgdMomentum:
      for (std::size_t i = 0; i < theta.size(); ++i) {
        first_[i] = config_.momentum * first_[i] + g[i];
        theta[i] -= lr * first_[i];
      }
      break;
    case OptimizerKind::kAdam: {
      const double t = static_cast<double>(steps_);
      const float c1 = static_cast<float>(1.0 - std::pow(config_.beta1, t));
      const float c2 = static_cast<float>(1.0 - std::pow(config_.beta2, t));
      const float b1 = config_.beta1, b2 = config_.beta2;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        first_[i] = b1 * first_[i] + (1.0f - b1) * g[i];
        second_[i] = b2 * second_[i] + (1.0f - b2) * g[i] * g[i];
        const float m_hat = first_[i] / c1;
        const float v_hat = second_[i] / c2;
        theta[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
      break;
    }
  }
}

}  // namespace isonet
