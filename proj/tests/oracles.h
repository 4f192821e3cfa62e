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

// Test-side reference implementations. Nothing here calls the library's
// forward/backward kernels or metric fast paths.

#ifndef ISONET_TESTS_ORACLES_H_
#define ISONET_TESTS_ORACLES_H_

#include <cstdint>
#include <span>
#include <vector>

#include "isonet/data.h"
#include "isonet/nn.h"
#include "isonet/random.h"

namespace isonet::testing {

struct OracleBatch {
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
};

// Mean loss of the network described by (spec, layout) evaluated in double
// from first principles. `relu_signs`, when given, receives the sign pattern
// of every ReLU input (for detecting kink crossings).
double OracleLoss(const NetworkSpec& spec, const ParameterLayout& layout,
                  std::span<const double> params, const OracleBatch& batch,
                  std::vector<char>* relu_signs = nullptr);

// Output probabilities (sigmoid or softmax) for one input.
std::vector<double> OracleOutputs(const NetworkSpec& spec,
                                  const ParameterLayout& layout,
                                  std::span<const double> params,
                                  std::span<const double> x);

struct GradientCheck {
  double relative_error = 0.0;  // ||g - fd|| / max(||g||, ||fd||)
  int checked = 0;
  int skipped = 0;  // coordinates whose +-h probe crossed a ReLU kink
};

// Central differences of OracleLoss with step h against `gradient`.
GradientCheck CheckAgainstFiniteDifferences(const NetworkSpec& spec,
                                            const ParameterLayout& layout,
                                            std::span<const double> params,
                                            const OracleBatch& batch,
                                            std::span<const double> gradient,
                                            double h);

// A random small network, parameters and batch. Norm gains and biases are
// perturbed away from their initial values.
struct GradientCase {
  NetworkSpec spec;
  HeadKind head = HeadKind::kBinary;
  ParameterVector params;
  std::vector<std::vector<float>> inputs;
  std::vector<int> labels;

  OracleBatch AsOracleBatch() const;
  std::vector<Example> AsExamples() const;
};

GradientCase RandomGradientCase(Rng& rng, bool instance_norm, HeadKind head);

// Pairwise Mann-Whitney enumeration.
double BruteForceAuroc(std::span<const double> id, std::span<const double> ood);
// Scans every candidate threshold and keeps the largest one that retains at
// least `tpr_level` of the ID scores.
double BruteForceFpr(std::span<const double> id, std::span<const double> ood,
                     double tpr_level);

// Spearman rank correlation with average ranks for ties.
double Spearman(std::span<const double> x, std::span<const double> y);

// A small two-class patch dataset for fast protocol tests.
Dataset TinyDataset(int patch_size, int per_class, std::uint64_t seed);

}  // namespace isonet::testing

#endif  // ISONET_TESTS_ORACLES_H_
