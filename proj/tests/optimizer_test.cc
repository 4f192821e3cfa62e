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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "isonet/optimizer.h"

namespace isonet {
namespace {

ParameterVector Vec(std::vector<float> values) {
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.hidden_widths = {1};
  spec.use_instance_norm = false;
  // 1 weight + 1 bias + 1 head weight + 1 head bias.
  ParameterLayout layout = ParameterLayout::Build(spec, HeadKind::kBinary);
  return ParameterVector(layout, std::move(values));
}

TEST(OptimizerTest, PlainSgd) {
  Optimizer opt({OptimizerKind::kSgd, 0.1f}, 4);
  ParameterVector theta = Vec({1.0f, -2.0f, 0.5f, 0.0f});
  opt.Step(theta, Vec({1.0f, 1.0f, -4.0f, 0.0f}));
  EXPECT_FLOAT_EQ(theta[0], 0.9f);
  EXPECT_FLOAT_EQ(theta[1], -2.1f);
  EXPECT_FLOAT_EQ(theta[2], 0.9f);
  EXPECT_FLOAT_EQ(theta[3], 0.0f);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(OptimizerTest, MomentumAccumulates) {
  OptimizerConfig config{OptimizerKind::kSgdMomentum, 0.1f};
  config.momentum = 0.5f;
  Optimizer opt(config, 4);
  ParameterVector theta = Vec({0.0f, 0.0f, 0.0f, 0.0f});
  const ParameterVector g = Vec({1.0f, 2.0f, 0.0f, -1.0f});
  opt.Step(theta, g);  // v = g
  opt.Step(theta, g);  // v = 1.5 g
  for (std::size_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(theta[i], -0.25f * g[i]);
}

TEST(OptimizerTest, AdamMatchesReference) {
  Optimizer opt({OptimizerKind::kAdam, 0.01f}, 4);
  ParameterVector theta = Vec({0.5f, -0.5f, 1.0f, 2.0f});
  std::vector<double> ref = {0.5, -0.5, 1.0, 2.0}, m(4, 0.0), v(4, 0.0);
  const std::vector<std::vector<float>> grads = {
      {0.1f, -3.0f, 0.0f, 1e-3f}, {0.2f, 1.0f, 0.5f, -1e-3f}, {-0.4f, 0.3f, 0.5f, 2.0f}};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    opt.Step(theta, Vec(grads[t - 1]));
    for (std::size_t i = 0; i < 4; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(theta[i], ref[i], 1e-6);
}

TEST(OptimizerTest, ZeroLearningRateLeavesParameters) {
  for (OptimizerKind kind :
       {OptimizerKind::kSgd, OptimizerKind::kSgdMomentum, OptimizerKind::kAdam}) {
    Optimizer opt({kind, 0.0f}, 4);
    ParameterVector theta = Vec({1.0f, 2.0f, 3.0f, 4.0f});
    const ParameterVector before = theta;
    opt.Step(theta, Vec({1.0f, -1.0f, 1.0f, -1.0f}));
    EXPECT_EQ(theta, before) << OptimizerKindName(kind);
  }
}

TEST(OptimizerTest, RejectsMismatchAndBadConfig) {
  Optimizer opt({OptimizerKind::kAdam, 0.1f}, 3);
  ParameterVector theta = Vec({1.0f, 2.0f, 3.0f, 4.0f});
  EXPECT_THROW(opt.Step(theta, theta), std::invalid_argument);
  EXPECT_THROW(Optimizer({OptimizerKind::kAdam, -1.0f}, 4), std::invalid_argument);
  EXPECT_THROW(ParseOptimizerKind("rmsprop"), std::invalid_argument);
  for (OptimizerKind kind :
       {OptimizerKind::kSgd, OptimizerKind::kSgdMomentum, OptimizerKind::kAdam}) {
    EXPECT_EQ(ParseOptimizerKind(OptimizerKindName(kind)), kind);
  }
}

}  // namespace
}  // namespace isonet
