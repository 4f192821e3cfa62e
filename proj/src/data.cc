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

#include "isonet/data.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "binary_io.h"

namespace isonet {
namespace {

constexpr std::uint32_t kDatasetMagic = 0x53445349;  // "ISDS"
constexpr std::uint32_t kDatasetVersion = 1;

Sample MakeIdSample(const SyntheticConfig& config, int label, Rng& rng) {
  const int p = config.patch_size;
  auto [row, col] = config.ClassCenter(label);
  std::normal_distribution<double> jitter(0.0, config.center_jitter);
  if (config.center_jitter > 0) {
    row += jitter(rng);
    col += jitter(rng);
  }
  std::normal_distribution<float> noise(0.0f, config.noise_sigma);
  const double inv_two_var = 1.0 / (2.0 * config.blob_sigma * config.blob_sigma);
  Sample s;
  s.label = label;
  s.pixels.resize(static_cast<std::size_t>(p) * p);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      const double d2 = (r - row) * (r - row) + (c - col) * (c - col);
      const float blob =
          config.blob_amplitude * static_cast<float>(std::exp(-d2 * inv_two_var));
      const float eps = config.noise_sigma > 0 ? noise(rng) : 0.0f;
      s.pixels[static_cast<std::size_t>(r) * p + c] =
          std::clamp(config.background + blob + eps, 0.0f, 1.0f);
    }
  }
  return s;
}

Dataset MakeEmpty(const SyntheticConfig& config) {
  Dataset d;
  d.patch_size = config.patch_size;
  d.num_classes = config.num_classes;
  return d;
}

Dataset MakeIdSplit(const SyntheticConfig& config, int per_class,
                    StreamTag tag) {
  Rng rng(DeriveSeed(config.seed, 0, tag));
  Dataset d = MakeEmpty(config);
  d.samples.reserve(static_cast<std::size_t>(per_class) * config.num_classes);
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < config.num_classes; ++c) {
      d.samples.push_back(MakeIdSample(config, c, rng));
    }
  }
  return d;
}

}  // namespace

std::string_view ArtifactKindName(ArtifactKind kind) {
  return kind == ArtifactKind::kCornerSquare ? "corner_square" : "stripe";
}

ArtifactKind ParseArtifactKind(std::string_view name) {
  if (name == "corner_square") return ArtifactKind::kCornerSquare;
  if (name == "stripe") return ArtifactKind::kStripe;
  throw std::invalid_argument("unknown artifact kind '" + std::string(name) + "'");
}

std::string_view OodKindName(OodKind kind) {
  return kind == OodKind::kArtifact ? "artifact" : "intensity_shift";
}

OodKind ParseOodKind(std::string_view name) {
  if (name == "artifact") return OodKind::kArtifact;
  if (name == "intensity_shift") return OodKind::kIntensityShift;
  throw std::invalid_argument("unknown ood kind '" + std::string(name) + "'");
}

void SyntheticConfig::Validate() const {
  if (patch_size < 8) throw std::invalid_argument("patch size must be >= 8");
  if (num_classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (train_per_class < 1 || id_test_per_class < 0 || ood_test_count < 0) {
    throw std::invalid_argument("split sizes must be non-negative (train >= 1)");
  }
  if (artifact_size < 1 || artifact_size > patch_size / 2) {
    throw std::invalid_argument("artifact does not fit inside the patch");
  }
  if (noise_sigma < 0 || blob_sigma <= 0 || center_jitter < 0) {
    throw std::invalid_argument("sigmas must be non-negative");
  }
  const double span = class_offset * (num_classes - 1);
  if (span > patch_size - 2) {
    throw std::invalid_argument("class blob centers do not fit inside the patch");
  }
}

std::pair<double, double> SyntheticConfig::ClassCenter(int label) const {
  const double mid = (patch_size - 1) / 2.0;
  return {mid + (label - (num_classes - 1) / 2.0) * class_offset, mid};
}

std::vector<std::size_t> ArtifactPixels(const SyntheticConfig& config) {
  const int p = config.patch_size;
  const int k = config.artifact_size;
  std::vector<std::size_t> idx;
  if (config.artifact == ArtifactKind::kCornerSquare) {
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) idx.push_back(static_cast<std::size_t>(r) * p + c);
    }
  } else {
    // One-pixel-high horizontal line across the lower part of the patch.
    const int row = p - 3;
    for (int c = 0; c < p; ++c) idx.push_back(static_cast<std::size_t>(row) * p + c);
  }
  return idx;
}

void ApplyArtifact(const SyntheticConfig& config, std::span<float> pixels) {
  for (std::size_t i : ArtifactPixels(config)) pixels[i] = config.artifact_value;
}

void ApplyIntensityShift(const SyntheticConfig& config, std::span<float> pixels) {
  for (float& v : pixels) {
    v = std::clamp((v - 0.5f) * config.shift_contrast + 0.5f +
                       config.shift_brightness,
                   0.0f, 1.0f);
  }
}

Dataset GenerateOodBases(const SyntheticConfig& config) {
  config.Validate();
  Rng rng(DeriveSeed(config.seed, 0, StreamTag::kDataOodTest));
  Dataset d = MakeEmpty(config);
  for (int i = 0; i < config.ood_test_count; ++i) {
    d.samples.push_back(MakeIdSample(config, i % config.num_classes, rng));
  }
  return d;
}

SyntheticSplits Generate(const SyntheticConfig& config) {
  config.Validate();
  SyntheticSplits splits;
  splits.train = MakeIdSplit(config, config.train_per_class, StreamTag::kDataTrain);
  splits.id_test =
      MakeIdSplit(config, config.id_test_per_class, StreamTag::kDataIdTest);
  splits.ood_test = GenerateOodBases(config);
  for (Sample& s : splits.ood_test.samples) {
    if (config.ood == OodKind::kArtifact) {
      ApplyArtifact(config, s.pixels);
    } else {
      ApplyIntensityShift(config, s.pixels);
    }
    s.ood = true;
  }
  return splits;
}

std::string_view AugmentSideName(AugmentSide side) {
  switch (side) {
    case AugmentSide::kBoth:
      return "both";
    case AugmentSide::kSourceOnly:
      return "source_only";
    case AugmentSide::kTargetOnly:
      return "target_only";
    case AugmentSide::kNone:
      return "none";
  }
  return "unknown";
}

AugmentSide ParseAugmentSide(std::string_view name) {
  if (name == "both") return AugmentSide::kBoth;
  if (name == "source_only") return AugmentSide::kSourceOnly;
  if (name == "target_only") return AugmentSide::kTargetOnly;
  if (name == "none") return AugmentSide::kNone;
  throw std::invalid_argument("unknown augmentation setting '" +
                              std::string(name) + "'");
}

void AugmentPolicy::Validate() const {
  if (flip_probability < 0 || flip_probability > 1) {
    throw std::invalid_argument("flip probability must lie in [0, 1]");
  }
  if (max_shift < 0 || noise_sigma < 0) {
    throw std::invalid_argument("shift and noise must be non-negative");
  }
}

void FlipHorizontal(std::span<float> pixels, int patch_size) {
  for (int r = 0; r < patch_size; ++r) {
    auto row = pixels.subspan(static_cast<std::size_t>(r) * patch_size, patch_size);
    std::reverse(row.begin(), row.end());
  }
}

void CircularShift(std::span<float> pixels, int patch_size, int dy, int dx) {
  const int p = patch_size;
  std::vector<float> copy(pixels.begin(), pixels.end());
  for (int r = 0; r < p; ++r) {
    const int sr = ((r - dy) % p + p) % p;
    for (int c = 0; c < p; ++c) {
      const int sc = ((c - dx) % p + p) % p;
      pixels[static_cast<std::size_t>(r) * p + c] =
          copy[static_cast<std::size_t>(sr) * p + sc];
    }
  }
}

void AugmentInto(std::span<const float> in, std::span<float> out,
                 int patch_size, const AugmentPolicy& policy, Rng& rng) {
  std::copy(in.begin(), in.end(), out.begin());
  if (!policy.enabled) return;
  std::bernoulli_distribution flip(policy.flip_probability);
  if (flip(rng)) FlipHorizontal(out, patch_size);
  if (policy.max_shift > 0) {
    std::uniform_int_distribution<int> shift(-policy.max_shift, policy.max_shift);
    const int dy = shift(rng);
    const int dx = shift(rng);
    CircularShift(out, patch_size, dy, dx);
  }
  if (policy.noise_sigma > 0) {
    std::normal_distribution<float> noise(0.0f, policy.noise_sigma);
    for (float& v : out) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
  }
}

Sample Augment(const Sample& sample, int patch_size,
               const AugmentPolicy& policy, Rng& rng) {
  Sample out = sample;
  AugmentInto(sample.pixels, out.pixels, patch_size, policy, rng);
  return out;
}

Dataset ClassSubset(const Dataset& dataset, int label) {
  Dataset out;
  out.patch_size = dataset.patch_size;
  out.num_classes = dataset.num_classes;
  for (const Sample& s : dataset.samples) {
    if (s.label == label) out.samples.push_back(s);
  }
  return out;
}

BatchSampler::BatchSampler(std::size_t dataset_size)
    : order_(dataset_size), cursor_(dataset_size) {
  if (dataset_size == 0) throw std::invalid_argument("cannot sample from an empty dataset");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::size_t> BatchSampler::Next(std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size);
  while (batch.size() < batch_size) {
    if (cursor_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

std::vector<Sample> SampleBatch(const Dataset& dataset, std::size_t batch_size,
                                Rng& rng) {
  BatchSampler sampler(dataset.size());
  std::vector<Sample> out;
  for (std::size_t i : sampler.Next(batch_size, rng)) out.push_back(dataset[i]);
  return out;
}

void SaveDataset(const std::filesystem::path& path, const Dataset& dataset) {
  internal::ByteWriter w;
  w.Put(kDatasetMagic);
  w.Put(kDatasetVersion);
  w.Put(static_cast<std::uint32_t>(dataset.patch_size));
  w.Put(static_cast<std::uint32_t>(dataset.num_classes));
  w.Put(static_cast<std::uint32_t>(dataset.size()));
  const std::size_t dim = static_cast<std::size_t>(dataset.input_dim());
  for (const Sample& s : dataset.samples) {
    if (s.pixels.size() != dim) throw std::invalid_argument("sample has wrong size");
    w.PutFloats(s.pixels);
    w.Put(static_cast<std::int32_t>(s.label));
    w.Put(static_cast<std::uint8_t>(s.ood ? 1 : 0));
  }
  internal::WriteFile(path, w.bytes());
}

Dataset LoadDataset(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = internal::ReadFile(path);
  internal::ByteReader r(bytes);
  try {
    if (r.Get<std::uint32_t>() != kDatasetMagic) {
      throw std::runtime_error(path.string() + " is not a dataset file");
    }
    if (r.Get<std::uint32_t>() != kDatasetVersion) {
      throw std::runtime_error(path.string() + ": unsupported dataset version");
    }
    Dataset d;
    d.patch_size = static_cast<int>(r.Get<std::uint32_t>());
    d.num_classes = static_cast<int>(r.Get<std::uint32_t>());
    const std::uint32_t count = r.Get<std::uint32_t>();
    const std::size_t dim = static_cast<std::size_t>(d.input_dim());
    d.samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      Sample s;
      s.pixels = r.GetFloats(dim);
      s.label = r.Get<std::int32_t>();
      s.ood = r.Get<std::uint8_t>() != 0;
      d.samples.push_back(std::move(s));
    }
    if (r.remaining() != 0) {
      throw std::runtime_error(path.string() + ": trailing bytes");
    }
    return d;
  } catch (const std::out_of_range&) {
    throw std::runtime_error(path.string() + ": truncated dataset file");
  }
}

}  // namespace isonet
