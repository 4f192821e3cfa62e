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

#ifndef ISONET_RANDOM_H_
#define ISONET_RANDOM_H_

#include <cstdint>
#include <random>

namespace isonet {

using Rng = std::mt19937_64;

// Stream tags for DeriveSeed. Each consumer of randomness in an isolation run
// owns one tagged stream so that different execution paths (centralized,
// decentralized, parallel workers) draw identical values.
enum class StreamTag : std::uint64_t {
  kHeadInit = 1,
  kSourceBatches = 2,
  kTargetAugment = 3,
  kSourceEval = 4,
  kClassAssignment = 5,
  kTargetPool = 6,
  kDataTrain = 16,
  kDataIdTest = 17,
  kDataOodTest = 18,
  kPretrain = 19,
};

// splitmix64 finalizer.
std::uint64_t MixSeed(std::uint64_t x);

std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t index,
                         StreamTag tag);

}  // namespace isonet

#endif  // ISONET_RANDOM_H_
