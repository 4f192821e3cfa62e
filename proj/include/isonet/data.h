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

// Synthetic single-channel patch benchmark standing in for the imaging tasks:
// in-distribution patches carry a class-dependent Gaussian blob, and OOD
// patches are in-distribution patches with a local artifact or a global
// intensity shift. Also hosts augmentation and mini-batch sampling.

#ifndef ISONET_DATA_H_
#define ISONET_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "isonet/random.h"

namespace isonet {

struct Sample {
  std::vector<float> pixels;  // P*P, row-major, values in [0, 1]
  int label = 0;
  bool ood = false;  // ground truth for the evaluation harness only

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  int patch_size = 0;
  int num_classes = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int input_dim() const { return patch_size * patch_size; }
  const Sample& operator[](std::size_t i) const { return samples[i]; }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class ArtifactKind { kCornerSquare, kStripe };
enum class OodKind { kArtifact, kIntensityShift };

std::string_view ArtifactKindName(ArtifactKind kind);
ArtifactKind ParseArtifactKind(std::string_view name);
std::string_view OodKindName(OodKind kind);
OodKind ParseOodKind(std::string_view name);

struct SyntheticConfig {
  int patch_size = 16;
  int num_classes = 2;
  int train_per_class = 200;
  int id_test_per_class = 25;
  int ood_test_count = 50;
  float background = 0.2f;
  float noise_sigma = 0.05f;
  float blob_amplitude = 0.6f;
  float blob_sigma = 2.0f;
  // Vertical distance in pixels between neighbouring class blob centers.
  float class_offset = 5.0f;
  float center_jitter = 1.0f;
  ArtifactKind artifact = ArtifactKind::kCornerSquare;
  int artifact_size = 4;
  float artifact_value = 1.0f;
  OodKind ood = OodKind::kArtifact;
  float shift_brightness = 0.15f;
  float shift_contrast = 1.5f;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on impossible geometry.
  void Validate() const;

  // Expected blob center (row, col) for a class.
  std::pair<double, double> ClassCenter(int label) const;
};

struct SyntheticSplits {
  Dataset train;
  Dataset id_test;
  Dataset ood_test;
};

SyntheticSplits Generate(const SyntheticConfig& config);

// The in-distribution patches that Generate() turns into the OOD split.
Dataset GenerateOodBases(const SyntheticConfig& config);

// Flat indices of the pixels an artifact overwrites.
std::vector<std::size_t> ArtifactPixels(const SyntheticConfig& config);

void ApplyArtifact(const SyntheticConfig& config, std::span<float> pixels);
void ApplyIntensityShift(const SyntheticConfig& config, std::span<float> pixels);

enum class AugmentSide { kBoth, kSourceOnly, kTargetOnly, kNone };

std::string_view AugmentSideName(AugmentSide side);
AugmentSide ParseAugmentSide(std::string_view name);

// Horizontal flip, circular shift and additive noise. Single-channel patches
// have no colour jitter; the additive noise plays that role.
struct AugmentPolicy {
  bool enabled = true;
  AugmentSide apply_on = AugmentSide::kBoth;
  float flip_probability = 0.5f;
  int max_shift = 2;
  float noise_sigma = 0.05f;

  void Validate() const;
  bool AppliesToSource() const {
    return enabled &&
           (apply_on == AugmentSide::kBoth || apply_on == AugmentSide::kSourceOnly);
  }
  bool AppliesToTarget() const {
    return enabled &&
           (apply_on == AugmentSide::kBoth || apply_on == AugmentSide::kTargetOnly);
  }
};

void FlipHorizontal(std::span<float> pixels, int patch_size);
void CircularShift(std::span<float> pixels, int patch_size, int dy, int dx);

// Writes the augmented version of `in` into `out`. Identity (and no rng
// draws) when the policy is disabled.
void AugmentInto(std::span<const float> in, std::span<float> out,
                 int patch_size, const AugmentPolicy& policy, Rng& rng);
Sample Augment(const Sample& sample, int patch_size,
               const AugmentPolicy& policy, Rng& rng);

Dataset ClassSubset(const Dataset& dataset, int label);

// Epoch-shuffled sampling without replacement: indices are consumed from a
// permutation that is reshuffled whenever it runs out.
class BatchSampler {
 public:
  explicit BatchSampler(std::size_t dataset_size);

  std::vector<std::size_t> Next(std::size_t batch_size, Rng& rng);

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

// One draw from a fresh sampler.
std::vector<Sample> SampleBatch(const Dataset& dataset, std::size_t batch_size,
                                Rng& rng);

void SaveDataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset LoadDataset(const std::filesystem::path& path);

}  // namespace isonet

#endif  // ISONET_DATA_H_
