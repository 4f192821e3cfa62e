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
#include <limits>
#include <vector>

#include "isonet/isolation.h"
#include "isonet/pretrain.h"
#include "oracles.h"

namespace isonet {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Fixture {
  Dataset source;
  NetworkSpec spec;
  ParameterVector pretrained;
  std::vector<float> target;
};

Fixture MakeFixture() {
  Fixture f;
  f.source = testing::TinyDataset(8, 12, 5);
  f.spec = NetworkSpec::FromPreset("slim", 64, 2);
  f.spec.seed = 2;
  f.pretrained = InitParams(f.spec, HeadKind::kMulticlass);
  f.target = f.source[0].pixels;
  for (int k : {0, 1, 8, 9}) f.target[k] = 1.0f;  // 2x2 corner artifact
  return f;
}

TEST(ConvergenceStateTest, WindowSemantics) {
  ConvergenceState s(3);
  s.RecordTargetScore(0.9f);
  s.RecordTargetScore(0.9f);
  EXPECT_FALSE(s.TargetStable());  // fewer than E_stab updates
  s.RecordTargetScore(0.9f);
  EXPECT_TRUE(s.TargetStable());
  s.RecordTargetScore(0.5f);  // 0.5 is not > 0.5
  EXPECT_FALSE(s.TargetStable());
  EXPECT_EQ(s.history().size(), 3u);
  s.RecordTargetScore(0.6f);
  s.RecordTargetScore(0.7f);
  EXPECT_FALSE(s.TargetStable());
  s.RecordTargetScore(0.8f);
  EXPECT_TRUE(s.TargetStable());
  EXPECT_EQ(s.updates(), 7);
  EXPECT_THROW(ConvergenceState(0), std::invalid_argument);
}

TEST(FirstConvergenceTest, DualCriterion) {
  const std::vector<float> scores = {0.9f, 0.9f, 0.9f, 0.9f, 0.9f, 0.9f};
  const std::vector<double> acc = {1, 1, 0.8, 0.8, 0.9, 1};
  EXPECT_EQ(FirstConvergence(scores, acc, 3, 0.85), 5);
  EXPECT_EQ(FirstConvergence(scores, acc, 1, 0.85), 1);
  const std::vector<double> never = {0, 0, 0, 0, 0, 0};
  EXPECT_EQ(FirstConvergence(scores, never, 3, 0.85), std::nullopt);
  const std::vector<float> broken = {0.9f, 0.9f, 0.4f, 0.9f, 0.9f, 0.9f};
  const std::vector<double> ok(6, 1.0);
  EXPECT_EQ(FirstConvergence(broken, ok, 3, 0.85), 6);
  const std::vector<double> missing = {kNaN, kNaN, kNaN, kNaN, kNaN, 1.0};
  EXPECT_EQ(FirstConvergence(scores, missing, 2, 0.85), 6);
}

TEST(SourceEvaluatorTest, SubsampleIsFixedAndSized) {
  const Fixture f = MakeFixture();
  SourceEvaluator full(f.source, std::nullopt, 1);
  SourceEvaluator part(f.source, 5, 1);
  EXPECT_EQ(full.size(), f.source.size());
  EXPECT_EQ(part.size(), 5u);
  ParameterVector params = InitParams(f.spec, HeadKind::kBinary);
  params.mutable_segment("head.bias")[0] = -30.0f;
  EXPECT_EQ(full.Accuracy(f.spec, params), 1.0);
  params.mutable_segment("head.bias")[0] = 30.0f;
  EXPECT_EQ(part.Accuracy(f.spec, params), 0.0);
}

TEST(CentralizedGradientTest, ReplicaExpansionIsTheWeightedMean) {
  const Fixture f = MakeFixture();
  const ParameterVector params = InitializeIsolationNetwork(f.spec, f.pretrained, 3);
  IsolationBatch batch;
  for (int i = 0; i < 4; ++i) batch.source.emplace_back(f.source[i].pixels);
  batch.target = f.target;
  batch.replicas = 3;
  std::vector<Example> src;
  for (auto x : batch.source) src.push_back({x, 0});
  const std::vector<Example> tgt = {{f.target, 1}};
  const ParameterVector gs = Gradient(f.spec, params, src);
  const ParameterVector gt = Gradient(f.spec, params, tgt);
  const ParameterVector g = CentralizedGradient(f.spec, params, batch);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g[i], (4.0 * gs[i] + 3.0 * gt[i]) / 7.0, 1e-6);
  }
  const double ls = MeanLoss(f.spec, params, src), lt = MeanLoss(f.spec, params, tgt);
  EXPECT_NEAR(CentralizedLoss(f.spec, params, batch), (4 * ls + 3 * lt) / 7, 1e-6);
  batch.replicas = 0;
  EXPECT_THROW(CentralizedGradient(f.spec, params, batch), std::invalid_argument);
}

TEST(InitializeIsolationNetworkTest, CopiesFeaturesAndSeedsHead) {
  const Fixture f = MakeFixture();
  const ParameterVector a = InitializeIsolationNetwork(f.spec, f.pretrained, 3);
  const ParameterVector b = InitializeIsolationNetwork(f.spec, f.pretrained, 4);
  EXPECT_EQ(a.layout().head(), HeadKind::kBinary);
  for (std::size_t i = 0; i < a.layout().feature_size(); ++i) {
    EXPECT_EQ(a[i], f.pretrained[i]);
  }
  EXPECT_EQ(a, InitializeIsolationNetwork(f.spec, f.pretrained, 3));
  EXPECT_FALSE(a == b);
  const NetworkSpec other = NetworkSpec::FromPreset("base", 64, 2);
  EXPECT_THROW(InitializeIsolationNetwork(other, f.pretrained, 3), std::invalid_argument);
}

TEST(StreamsTest, SameSeedSameDraws) {
  const Fixture f = MakeFixture();
  AugmentPolicy policy;
  SourceBatchStream a(f.source, policy, 7), b(f.source, policy, 7), c(f.source, policy, 8);
  const auto ba = a.Next(5), bb = b.Next(5), bc = c.Next(5);
  EXPECT_EQ(ba.inputs, bb.inputs);
  EXPECT_NE(ba.inputs, bc.inputs);
  TargetStream t1(f.target, 8, policy, 3), t2(f.target, 8, policy, 3);
  for (int i = 0; i < 3; ++i) {
    const auto x = t1.Next();
    const auto y = t2.Next();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  policy.enabled = false;
  TargetStream plain(f.target, 8, policy, 3);
  const auto x = plain.Next();
  EXPECT_TRUE(std::equal(x.begin(), x.end(), f.target.begin(), f.target.end()));
}

TEST(IsolationSeedsTest, DistinctStreams) {
  const IsolationSeeds s = IsolationSeeds::Derive(1, 0);
  EXPECT_NE(s.head_init, s.source_batches);
  EXPECT_NE(s.source_batches, s.target_augment);
  EXPECT_NE(s.target_augment, s.source_eval);
  EXPECT_NE(s.head_init, IsolationSeeds::Derive(1, 1).head_init);
  EXPECT_NE(s.head_init, IsolationSeeds::Derive(2, 0).head_init);
}

TEST(RunCentralizedTest, CapOfOneScoresOne) {
  const Fixture f = MakeFixture();
  IsolationOptions options;
  options.convergence.max_rounds = 1;
  const IsolationResult r =
      RunCentralized(f.spec, f.pretrained, f.source, f.target, options, IsolationSeeds::Derive(1, 0));
  EXPECT_EQ(r.score, 1);
  EXPECT_EQ(r.trajectory.size(), 1u);
}

TEST(RunCentralizedTest, DeterministicAndConsistentWithRule) {
  const Fixture f = MakeFixture();
  IsolationOptions options;
  options.batch_size = 8;
  options.optimizer.learning_rate = 0.05f;
  options.convergence.max_rounds = 400;
  options.convergence.stability_window = 3;
  CentralizedHooks hooks;
  hooks.evaluate_source_every_step = true;
  const IsolationSeeds seeds = IsolationSeeds::Derive(4, 2);
  const IsolationResult a = RunCentralized(f.spec, f.pretrained, f.source, f.target, options, seeds, hooks);
  const IsolationResult b = RunCentralized(f.spec, f.pretrained, f.source, f.target, options, seeds, hooks);
  EXPECT_EQ(a.score, b.score);
  EXPECT_EQ(a.final_params, b.final_params);
  ASSERT_FALSE(a.censored) << "the artifact target should be isolated";

  std::vector<float> scores;
  std::vector<double> acc;
  for (const RoundRecord& r : a.trajectory) {
    scores.push_back(r.target_score);
    acc.push_back(r.source_accuracy.value());
  }
  EXPECT_EQ(FirstConvergence(scores, acc, 3, options.convergence.tau), a.score);
  EXPECT_EQ(static_cast<int>(a.trajectory.size()), a.score);

  // Lazy source evaluation does not change the score.
  const IsolationResult lazy = RunCentralized(f.spec, f.pretrained, f.source, f.target, options, seeds);
  EXPECT_EQ(lazy.score, a.score);

  // Converging exactly at the cap is not censored.
  options.convergence.max_rounds = a.score;
  const IsolationResult capped = RunCentralized(f.spec, f.pretrained, f.source, f.target, options, seeds);
  EXPECT_EQ(capped.score, a.score);
  EXPECT_FALSE(capped.censored);
  options.convergence.max_rounds = a.score - 1;
  const IsolationResult short_run = RunCentralized(f.spec, f.pretrained, f.source, f.target, options, seeds);
  EXPECT_EQ(short_run.score, a.score - 1);
  EXPECT_TRUE(short_run.censored);
}

TEST(RunCentralizedTest, RejectsBadInputs) {
  const Fixture f = MakeFixture();
  IsolationOptions options;
  Dataset empty = f.source;
  empty.samples.clear();
  EXPECT_THROW(RunCentralized(f.spec, f.pretrained, empty, f.target, options, {}),
               std::invalid_argument);
  options.convergence.tau = 1.5;
  EXPECT_THROW(RunCentralized(f.spec, f.pretrained, f.source, f.target, options, {}),
               std::invalid_argument);
}

}  // namespace
}  // namespace isonet
