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

#include "isonet/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace isonet {
namespace {

void RequireNonEmpty(const ScoreSet& scores) {
  if (scores.id_scores.empty() || scores.ood_scores.empty()) {
    throw std::invalid_argument("ID and OOD score sets must both be non-empty");
  }
}

}  // namespace

double Auroc(const ScoreSet& scores) {
  RequireNonEmpty(scores);
  std::vector<double> id = scores.id_scores;
  std::vector<double> ood = scores.ood_scores;
  std::sort(id.begin(), id.end());
  std::sort(ood.begin(), ood.end());
  // Count in half-units so the result is exact: 2 per win, 1 per tie.
  std::uint64_t half_wins = 0;
  std::size_t below = 0;  // OOD scores strictly below the current ID score
  std::size_t j = 0;
  for (std::size_t i = 0; i < id.size();) {
    const double v = id[i];
    std::size_t id_equal = 0;
    while (i < id.size() && id[i] == v) {
      ++id_equal;
      ++i;
    }
    while (j < ood.size() && ood[j] < v) ++j;
    below = j;
    std::size_t ood_equal = 0;
    while (j + ood_equal < ood.size() && ood[j + ood_equal] == v) ++ood_equal;
    half_wins += id_equal * (2 * below + ood_equal);
  }
  return static_cast<double>(half_wins) /
         (2.0 * static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

double FprAtTpr(const ScoreSet& scores, double tpr_level) {
  RequireNonEmpty(scores);
  if (!(tpr_level > 0.0 && tpr_level <= 1.0)) {
    throw std::invalid_argument("TPR level must lie in (0, 1]");
  }
  std::vector<double> id = scores.id_scores;
  std::sort(id.begin(), id.end(), std::greater<>());
  const double n = static_cast<double>(id.size());
  // Walk thresholds from the highest ID score down; the first one whose
  // retained fraction reaches the level is the largest valid threshold.
  double threshold = id.back();
  for (std::size_t k = 0; k < id.size(); ++k) {
    const double candidate = id[k];
    std::size_t retained = k + 1;
    while (retained < id.size() && id[retained] == candidate) ++retained;
    if (static_cast<double>(retained) / n >= tpr_level) {
      threshold = candidate;
      break;
    }
  }
  const auto accepted = std::count_if(scores.ood_scores.begin(), scores.ood_scores.end(),
                                      [&](double s) { return s >= threshold; });
  return static_cast<double>(accepted) / static_cast<double>(scores.ood_scores.size());
}

std::vector<double> Quantiles(std::span<const double> values,
                              std::span<const double> qs) {
  if (values.empty()) throw std::invalid_argument("quantiles of an empty list");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(qs.size());
  for (double q : qs) {
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile must lie in [0, 1]");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(sorted[lo] + frac * (sorted[hi] - sorted[lo]));
  }
  return out;
}

std::vector<double> Quantiles(std::span<const int> values,
                              std::span<const double> qs) {
  const std::vector<double> as_double(values.begin(), values.end());
  return Quantiles(std::span<const double>(as_double), qs);
}

double MspScore(const NetworkSpec& spec, const ParameterVector& pretrained,
                std::span<const float> x) {
  const MulticlassOutput out = ForwardMulticlass(spec, pretrained, x);
  return *std::max_element(out.probabilities.begin(), out.probabilities.end());
}

}  // namespace isonet
