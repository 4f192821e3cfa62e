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

#include "isonet/nn.h"
#include "oracles.h"

namespace isonet {
namespace {

NetworkSpec SmallSpec(bool instance_norm = true) {
  NetworkSpec spec;
  spec.input_dim = 4;
  spec.hidden_widths = {3, 2};
  spec.use_instance_norm = instance_norm;
  spec.num_classes = 3;
  spec.seed = 11;
  return spec;
}

std::vector<double> ToDouble(std::span<const float> v) {
  return std::vector<double>(v.begin(), v.end());
}

TEST(NetworkSpecTest, RejectsBadShapes) {
  NetworkSpec spec = SmallSpec();
  spec.hidden_widths = {};
  EXPECT_THROW(spec.Validate(), std::invalid_argument);
  spec.hidden_widths = {1};
  EXPECT_THROW(spec.Validate(), std::invalid_argument);
  spec.use_instance_norm = false;
  EXPECT_NO_THROW(spec.Validate());
  spec.num_classes = 1;
  EXPECT_THROW(spec.Validate(), std::invalid_argument);
  EXPECT_THROW(NetworkSpec::FromPreset("huge", 16, 2), std::invalid_argument);
}

TEST(NetworkSpecTest, Presets) {
  EXPECT_EQ(NetworkSpec::FromPreset("slim", 256, 2).hidden_widths, (std::vector<int>{16, 16}));
  EXPECT_EQ(NetworkSpec::FromPreset("base", 256, 2).hidden_widths, (std::vector<int>{32, 32}));
  EXPECT_EQ(NetworkSpec::FromPreset("deep", 256, 2).hidden_widths,
            (std::vector<int>{64, 32, 32}));
}

TEST(ParameterLayoutTest, OffsetsByHand) {
  const ParameterLayout layout = ParameterLayout::Build(SmallSpec(), HeadKind::kBinary);
  struct Expected {
    const char* name;
    std::size_t offset, size;
  };
  const Expected expected[] = {
      {"hidden0.weight", 0, 12}, {"hidden0.bias", 12, 3}, {"norm0.gain", 15, 3},
      {"norm0.bias", 18, 3},     {"hidden1.weight", 21, 6}, {"hidden1.bias", 27, 2},
      {"norm1.gain", 29, 2},     {"norm1.bias", 31, 2},    {"head.weight", 33, 2},
      {"head.bias", 35, 1}};
  ASSERT_EQ(layout.segments().size(), std::size(expected));
  for (const Expected& e : expected) {
    const Segment& s = layout.Find(e.name);
    EXPECT_EQ(s.offset, e.offset) << e.name;
    EXPECT_EQ(s.size, e.size) << e.name;
  }
  EXPECT_EQ(layout.size(), 36u);
  EXPECT_EQ(layout.feature_size(), 33u);
  EXPECT_THROW(layout.Find("missing"), std::out_of_range);
}

TEST(ParameterLayoutTest, FeaturePrefixSharedAcrossHeads) {
  const NetworkSpec spec = SmallSpec();
  const ParameterLayout bin = ParameterLayout::Build(spec, HeadKind::kBinary);
  const ParameterLayout multi = ParameterLayout::Build(spec, HeadKind::kMulticlass);
  EXPECT_EQ(bin.feature_size(), multi.feature_size());
  EXPECT_EQ(multi.size(), multi.feature_size() + 2 * 3 + 3);
  EXPECT_EQ(ParameterLayout::Build(spec, HeadKind::kBinary), bin);
}

TEST(InitParamsTest, BoundsAndDeterminism) {
  NetworkSpec spec = SmallSpec();
  const ParameterVector a = InitParams(spec, HeadKind::kMulticlass);
  EXPECT_EQ(a, InitParams(spec, HeadKind::kMulticlass));
  for (const Segment& s : a.layout().segments()) {
    const auto values = a.segment(s.name);
    if (s.name.rfind("norm", 0) == 0) {
      const float want = s.name.find("gain") != std::string::npos ? 1.0f : 0.0f;
      for (float v : values) EXPECT_EQ(v, want) << s.name;
      continue;
    }
    const std::string weight = s.name.substr(0, s.name.find('.')) + ".weight";
    const double fan_in = a.layout().Find(weight).shape[1];
    for (float v : values) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(fan_in) + 1e-7) << s.name;
  }
  spec.seed = 12;
  EXPECT_FALSE(a == InitParams(spec, HeadKind::kMulticlass));
}

TEST(ParameterVectorTest, ArithmeticAndChecksum) {
  const NetworkSpec spec = SmallSpec();
  ParameterVector a = InitParams(spec, HeadKind::kBinary);
  const ParameterVector b = a;
  const std::uint32_t crc = a.Checksum();
  a += b;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], 2.0f * b[i]);
  a *= 0.5f;
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.Checksum(), crc);
  a[3] = std::nextafter(a[3], 10.0f);
  EXPECT_NE(a.Checksum(), crc);
  EXPECT_THROW(a += InitParams(spec, HeadKind::kMulticlass), std::invalid_argument);
  EXPECT_THROW(ParameterVector(a.layout(), std::vector<float>(3)), std::invalid_argument);
}

TEST(ParameterVectorTest, EqualityIsBitwise) {
  const NetworkSpec spec = SmallSpec();
  ParameterVector a = InitParams(spec, HeadKind::kBinary);
  ParameterVector b = a;
  a[0] = 0.0f;
  b[0] = -0.0f;
  EXPECT_FALSE(a == b);
}

TEST(InstanceNormalizeTest, StandardizesAndIsShiftScaleInvariant) {
  const std::vector<float> x = {1.0f, 4.0f, -2.0f, 7.0f, 0.5f};
  const std::vector<float> gain(5, 1.0f), bias(5, 0.0f);
  const std::vector<float> y = InstanceNormalize(x, gain, bias);
  double mean = 0.0, var = 0.0;
  for (float v : y) mean += v;
  mean /= 5;
  for (float v : y) var += (v - mean) * (v - mean);
  var /= 5;
  EXPECT_NEAR(mean, 0.0, 1e-6);
  EXPECT_NEAR(var, 1.0, 1e-4);

  std::vector<float> shifted;
  for (float v : x) shifted.push_back(3.0f * v + 10.0f);
  const std::vector<float> z = InstanceNormalize(shifted, gain, bias);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], z[i], 1e-4);

  const std::vector<float> g2(5, 2.0f), b2(5, 0.5f);
  const std::vector<float> w = InstanceNormalize(x, g2, b2);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(w[i], 2.0f * y[i] + 0.5f, 1e-5);
}

TEST(InstanceNormalizeTest, ConstantInputStaysFinite) {
  const std::vector<float> x(4, 3.0f), gain(4, 1.0f), bias(4, 0.25f);
  for (float v : InstanceNormalize(x, gain, bias)) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(ForwardTest, MatchesOracleInBothPrecisions) {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const HeadKind head = trial % 2 ? HeadKind::kBinary : HeadKind::kMulticlass;
    const testing::GradientCase c = testing::RandomGradientCase(rng, trial % 3 != 0, head);
    const std::vector<double> p = ToDouble(c.params.values());
    for (const auto& x : c.inputs) {
      const std::vector<double> xd(x.begin(), x.end());
      const std::vector<double> want =
          testing::OracleOutputs(c.spec, c.params.layout(), p, xd);
      ForwardTrace<double> td;
      Forward<double>(c.spec, c.params.layout(), p, xd, td);
      ForwardTrace<float> tf;
      Forward<float>(c.spec, c.params.layout(), c.params.values(), x, tf);
      ASSERT_EQ(td.outputs.size(), want.size());
      for (std::size_t k = 0; k < want.size(); ++k) {
        EXPECT_NEAR(td.outputs[k], want[k], 1e-12);
        EXPECT_NEAR(tf.outputs[k], want[k], 1e-5);
      }
    }
  }
}

TEST(ForwardTest, MulticlassOutputIsADistribution) {
  const NetworkSpec spec = SmallSpec();
  const ParameterVector params = InitParams(spec, HeadKind::kMulticlass);
  const std::vector<float> x = {0.3f, -1.0f, 2.0f, 0.0f};
  const MulticlassOutput out = ForwardMulticlass(spec, params, x);
  double total = 0.0;
  for (float p : out.probabilities) {
    EXPECT_GE(p, 0.0f);
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
  EXPECT_THROW(ForwardBinary(spec, params, x), std::invalid_argument);
  EXPECT_THROW(ForwardMulticlass(spec, params, std::vector<float>(3)),
               std::invalid_argument);
}

TEST(GradientTest, DoubleKernelMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const HeadKind head = trial % 2 ? HeadKind::kBinary : HeadKind::kMulticlass;
    const testing::GradientCase c = testing::RandomGradientCase(rng, trial % 4 != 0, head);
    const std::vector<double> p = ToDouble(c.params.values());
    const testing::OracleBatch ob = c.AsOracleBatch();
    std::vector<BasicExample<double>> batch;
    for (std::size_t i = 0; i < ob.inputs.size(); ++i) {
      batch.push_back({ob.inputs[i], ob.labels[i]});
    }
    std::vector<double> grad(p.size());
    const double loss = BatchLossAndGradient<double>(
        c.spec, c.params.layout(), p, std::span<const BasicExample<double>>(batch), grad);
    EXPECT_NEAR(loss, testing::OracleLoss(c.spec, c.params.layout(), p, ob), 1e-10);
    const testing::GradientCheck check = testing::CheckAgainstFiniteDifferences(
        c.spec, c.params.layout(), p, ob, grad, 1e-5);
    EXPECT_GT(check.checked, 0);
    EXPECT_LT(check.relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(GradientTest, FloatPathTracksDoublePath) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const HeadKind head = trial % 2 ? HeadKind::kBinary : HeadKind::kMulticlass;
    const testing::GradientCase c = testing::RandomGradientCase(rng, true, head);
    const std::vector<Example> examples = c.AsExamples();
    const LossAndGradient lg = LossGradient(c.spec, c.params, examples);
    const std::vector<double> p = ToDouble(c.params.values());
    const testing::OracleBatch ob = c.AsOracleBatch();
    std::vector<BasicExample<double>> batch;
    for (std::size_t i = 0; i < ob.inputs.size(); ++i) batch.push_back({ob.inputs[i], ob.labels[i]});
    std::vector<double> grad(p.size());
    BatchLossAndGradient<double>(c.spec, c.params.layout(), p,
                                 std::span<const BasicExample<double>>(batch), grad);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      EXPECT_NEAR(lg.gradient[i], grad[i], 1e-5 * (1.0 + std::abs(grad[i])));
    }
    EXPECT_NEAR(MeanLoss(c.spec, c.params, examples), lg.loss, 1e-6);
  }
}

TEST(GradientTest, ClampedProbabilityHasZeroGradient) {
  NetworkSpec spec = SmallSpec();
  ParameterVector params = InitParams(spec, HeadKind::kBinary);
  params.mutable_segment("head.bias")[0] = 60.0f;  // sigmoid saturates to 1
  const std::vector<float> x = {0.1f, 0.2f, 0.3f, 0.4f};
  const std::vector<Example> batch = {{x, 0}};
  const LossAndGradient lg = LossGradient(spec, params, batch);
  for (float g : lg.gradient.values()) EXPECT_EQ(g, 0.0f);
  EXPECT_NEAR(lg.loss, -std::log(1e-7), 1e-3);
}

TEST(GradientTest, RejectsBadBatches) {
  const NetworkSpec spec = SmallSpec();
  const ParameterVector bin = InitParams(spec, HeadKind::kBinary);
  const ParameterVector multi = InitParams(spec, HeadKind::kMulticlass);
  const std::vector<float> x = {0.0f, 0.0f, 0.0f, 0.0f};
  EXPECT_THROW(Gradient(spec, bin, {}), std::invalid_argument);
  const std::vector<Example> bad_binary = {{x, 2}};
  EXPECT_THROW(Gradient(spec, bin, bad_binary), std::invalid_argument);
  const std::vector<Example> bad_class = {{x, 3}};
  EXPECT_THROW(Gradient(spec, multi, bad_class), std::invalid_argument);
  const std::vector<float> short_x = {0.0f};
  const std::vector<Example> bad_dim = {{short_x, 0}};
  EXPECT_THROW(Gradient(spec, bin, bad_dim), std::invalid_argument);
}

TEST(LossTest, CrossEntropyValues) {
  EXPECT_NEAR(BinaryCrossEntropy(0.5, 1), std::log(2.0), 1e-12);
  EXPECT_NEAR(BinaryCrossEntropy(0.25, 0), -std::log(0.75), 1e-12);
  EXPECT_NEAR(BinaryCrossEntropy(0.0, 1), -std::log(1e-7), 1e-6);
  const std::vector<float> p = {0.2f, 0.8f};
  EXPECT_NEAR(CategoricalCrossEntropy(p, 1), -std::log(0.8), 1e-6);
  EXPECT_THROW(CategoricalCrossEntropy(p, 2), std::invalid_argument);
}

}  // namespace
}  // namespace isonet
