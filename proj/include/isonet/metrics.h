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

// OOD evaluation metrics. Scores follow the "higher means more
// in-distribution" convention and ID samples are the positive class.

#ifndef ISONET_METRICS_H_
#define ISONET_METRICS_H_

#include <span>
#include <vector>

#include "isonet/nn.h"

namespace isonet {

struct ScoreSet {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

// Mann-Whitney estimate of P(id > ood) with ties counted as one half.
// Throws std::invalid_argument if either set is empty.
double Auroc(const ScoreSet& scores);

// Threshold s* is the largest value keeping at least `tpr_level` of the ID
// scores at or above it; returns the fraction of OOD scores >= s*.
double FprAtTpr(const ScoreSet& scores, double tpr_level = 0.95);

inline constexpr double kDefaultQuantilesArray[] = {0.25, 0.5, 0.75};
inline constexpr std::span<const double> kDefaultQuantiles = kDefaultQuantilesArray;

// Linear interpolation between closest ranks (position q * (n - 1) in the
// sorted list).
std::vector<double> Quantiles(std::span<const double> values,
                              std::span<const double> qs);
std::vector<double> Quantiles(std::span<const int> values,
                              std::span<const double> qs = kDefaultQuantiles);

// Maximum softmax probability of the primary model.
double MspScore(const NetworkSpec& spec, const ParameterVector& pretrained,
                std::span<const float> x);

}  // namespace isonet

#endif  // ISONET_METRICS_H_
