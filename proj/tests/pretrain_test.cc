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

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "isonet/checkpoint.h"
#include "isonet/pretrain.h"
#include "oracles.h"

namespace isonet {
namespace {

PretrainConfig SmallConfig(const Dataset& d) {
  PretrainConfig c;
  c.spec = NetworkSpec::FromPreset("slim", d.input_dim(), d.num_classes);
  c.epochs = 5;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

std::filesystem::path TempPath(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("isonet_" + name + "_" + std::to_string(::getpid()));
}

TEST(PretrainTest, DefaultBenchmarkIsLearned) {
  SyntheticConfig sc;
  sc.seed = 1;
  const SyntheticSplits splits = Generate(sc);
  PretrainConfig c;
  c.spec = NetworkSpec::FromPreset("base", splits.train.input_dim(), splits.train.num_classes);
  const PretrainResult r = Pretrain(c, splits.train);
  ASSERT_EQ(r.log.size(), 50u);
  EXPECT_GE(r.log.back().accuracy, 0.95);
  EXPECT_GE(EvaluateAccuracy(c.spec, r.params, splits.id_test), 0.9);
  EXPECT_LT(r.log.back().mean_loss, r.log.front().mean_loss);
  for (std::size_t i = 0; i < r.log.size(); ++i) EXPECT_EQ(r.log[i].epoch, static_cast<int>(i) + 1);
}

TEST(PretrainTest, ZeroLearningRateKeepsInitialization) {
  const Dataset d = testing::TinyDataset(8, 10, 1);
  PretrainConfig c = SmallConfig(d);
  c.optimizer.learning_rate = 0.0f;
  const PretrainResult r = Pretrain(c, d);
  NetworkSpec seeded = c.spec;
  seeded.seed = c.seed;
  EXPECT_EQ(r.params, InitParams(seeded, HeadKind::kMulticlass));
}

TEST(PretrainTest, SameSeedSameParameters) {
  const Dataset d = testing::TinyDataset(8, 10, 1);
  const PretrainConfig c = SmallConfig(d);
  const PretrainResult a = Pretrain(c, d);
  const PretrainResult b = Pretrain(c, d);
  EXPECT_EQ(a.params, b.params);
  PretrainConfig other = c;
  other.seed = 4;
  EXPECT_NE(Pretrain(other, d).params, a.params);
}

TEST(PretrainTest, RejectsOodAndMismatchedData) {
  Dataset d = testing::TinyDataset(8, 10, 1);
  const PretrainConfig c = SmallConfig(d);
  d.samples[2].ood = true;
  EXPECT_THROW(Pretrain(c, d), std::invalid_argument);
  d.samples[2].ood = false;
  d.samples[2].label = 5;
  EXPECT_THROW(Pretrain(c, d), std::invalid_argument);
  EXPECT_THROW(Pretrain(c, Dataset{8, 2, {}}), std::invalid_argument);
  PretrainConfig wrong = c;
  wrong.spec.input_dim = 10;
  EXPECT_THROW(Pretrain(wrong, testing::TinyDataset(8, 10, 1)), std::invalid_argument);
  PretrainConfig no_epochs = c;
  no_epochs.epochs = 0;
  EXPECT_THROW(Pretrain(no_epochs, testing::TinyDataset(8, 10, 1)), std::invalid_argument);
}

TEST(PretrainTest, AccuracyMatchesLogAndIgnoresOrder) {
  Dataset d = testing::TinyDataset(8, 10, 1);
  const PretrainConfig c = SmallConfig(d);
  const PretrainResult r = Pretrain(c, d);
  EXPECT_DOUBLE_EQ(EvaluateAccuracy(c.spec, r.params, d), r.log.back().accuracy);
  std::reverse(d.samples.begin(), d.samples.end());
  EXPECT_DOUBLE_EQ(EvaluateAccuracy(c.spec, r.params, d), r.log.back().accuracy);
}

TEST(PretrainTest, AccuracyAgainstDisjointLabelsIsZero) {
  Dataset d = testing::TinyDataset(8, 10, 1);
  d.num_classes = 4;
  NetworkSpec spec = NetworkSpec::FromPreset("slim", 64, 4);
  ParameterVector p(ParameterLayout::Build(spec, HeadKind::kMulticlass));
  // Every prediction is class 3; no sample carries that label.
  p.mutable_segment("head.bias")[3] = 10.0f;
  EXPECT_EQ(EvaluateAccuracy(spec, p, d), 0.0);
}

TEST(CheckpointTest, RoundTripIsExact) {
  const Dataset d = testing::TinyDataset(8, 10, 1);
  const PretrainConfig c = SmallConfig(d);
  const PretrainResult r = Pretrain(c, d);
  const auto path = TempPath("ckpt");
  SaveCheckpoint(path, c.spec, r.params);
  const Checkpoint back = LoadCheckpoint(path);
  EXPECT_EQ(back.spec, c.spec);
  EXPECT_EQ(back.params, r.params);
  EXPECT_EQ(back.params.layout().head(), HeadKind::kMulticlass);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, CorruptFilesAreRejected) {
  const Dataset d = testing::TinyDataset(8, 10, 1);
  const PretrainConfig c = SmallConfig(d);
  const ParameterVector p = InitParams(c.spec, HeadKind::kMulticlass);
  const auto path = TempPath("ckpt_bad");
  SaveCheckpoint(path, c.spec, p);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  EXPECT_ANY_THROW(LoadCheckpoint(path));
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_ANY_THROW(LoadCheckpoint(path));
  std::filesystem::remove(path);
  EXPECT_ANY_THROW(LoadCheckpoint(path));
  NetworkSpec other = c.spec;
  other.hidden_widths.push_back(3);
  EXPECT_THROW(SaveCheckpoint(path, other, p), std::invalid_argument);
}

}  // namespace
}  // namespace isonet
