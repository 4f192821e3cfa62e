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

// Minimal feedforward network used by the isolation classifiers and the
// primary model: Linear -> InstanceNorm (optional) -> ReLU per hidden layer,
// followed by either a single-logit sigmoid head or a C-way softmax head.
//
// Parameters live in one flat float array. Feature-extractor segments come
// first and the head segments last, so the feature extractor of any two
// layouts built from the same spec is the same prefix.

#ifndef ISONET_NN_H_
#define ISONET_NN_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace isonet {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kClampEpsilon = 1e-7;

enum class HeadKind { kBinary, kMulticlass };

std::string_view HeadKindName(HeadKind head);

struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden_widths;
  bool use_instance_norm = true;
  int num_classes = 2;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument describing the first violated constraint.
  void Validate() const;

  int latent_dim() const { return hidden_widths.back(); }
  int head_outputs(HeadKind head) const {
    return head == HeadKind::kBinary ? 1 : num_classes;
  }

  // "slim", "base" or "deep" width/depth presets.
  static NetworkSpec FromPreset(std::string_view preset, int input_dim,
                                int num_classes);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct Segment {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool in_head = false;

  friend bool operator==(const Segment&, const Segment&) = default;
};

class ParameterLayout {
 public:
  ParameterLayout() = default;

  // Pure function of (spec, head); the spec is validated first.
  static ParameterLayout Build(const NetworkSpec& spec, HeadKind head);

  std::span<const Segment> segments() const { return segments_; }
  const Segment& Find(std::string_view name) const;
  std::size_t size() const { return size_; }
  // Length of the feature-extractor prefix.
  std::size_t feature_size() const { return feature_size_; }
  HeadKind head() const { return head_; }

  friend bool operator==(const ParameterLayout&,
                         const ParameterLayout&) = default;

 private:
  std::vector<Segment> segments_;
  std::size_t size_ = 0;
  std::size_t feature_size_ = 0;
  HeadKind head_ = HeadKind::kBinary;
};

// Flat float32 parameters tagged with their layout. This is the unit that
// crosses the wire between nodes.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(ParameterLayout layout);
  ParameterVector(ParameterLayout layout, std::vector<float> values);

  const ParameterLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  std::span<float> mutable_values() { return values_; }
  std::vector<float> release() && { return std::move(values_); }

  float operator[](std::size_t i) const { return values_[i]; }
  float& operator[](std::size_t i) { return values_[i]; }

  std::span<const float> segment(std::string_view name) const;
  std::span<float> mutable_segment(std::string_view name);

  ParameterVector& operator+=(const ParameterVector& other);
  ParameterVector& operator*=(float scale);

  // CRC-32 over the little-endian float32 encoding in layout order.
  std::uint32_t Checksum() const;

  // Bitwise equality of values and layouts.
  friend bool operator==(const ParameterVector& a, const ParameterVector& b);

 private:
  ParameterLayout layout_;
  std::vector<float> values_;
};

ParameterVector operator+(ParameterVector a, const ParameterVector& b);
ParameterVector operator*(float scale, ParameterVector v);

// Throws std::invalid_argument when layouts differ.
void CheckSameLayout(const ParameterVector& a, const ParameterVector& b);

// Linear layers: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and
// biases. Norm gains start at 1 and norm biases at 0. Deterministic in
// spec.seed.
ParameterVector InitParams(const NetworkSpec& spec, HeadKind head);

// gain * (x - mean) / sqrt(var + kNormEpsilon) + bias, statistics taken over
// the single vector x (population variance).
std::vector<float> InstanceNormalize(std::span<const float> activation,
                                     std::span<const float> gain,
                                     std::span<const float> bias);

template <typename T>
struct ForwardTrace {
  std::vector<std::vector<T>> inputs;       // input of hidden layer l
  std::vector<std::vector<T>> linear;       // W x + b
  std::vector<std::vector<T>> normalized;   // (z - mean) * inv_std
  std::vector<T> inv_std;
  std::vector<std::vector<T>> activations;  // after ReLU
  std::vector<T> logits;
  std::vector<T> outputs;  // sigmoid (size 1) or softmax (size C)
};

struct BinaryOutput {
  float probability = 0.5f;
  ForwardTrace<float> trace;
};

struct MulticlassOutput {
  std::vector<float> probabilities;
  ForwardTrace<float> trace;
};

BinaryOutput ForwardBinary(const NetworkSpec& spec,
                           const ParameterVector& params,
                           std::span<const float> x);
MulticlassOutput ForwardMulticlass(const NetworkSpec& spec,
                                   const ParameterVector& params,
                                   std::span<const float> x);

// Probability-only shortcuts that reuse the caller's trace storage.
float BinaryProbability(const NetworkSpec& spec, const ParameterVector& params,
                        std::span<const float> x, ForwardTrace<float>& scratch);

// -[m ln p + (1 - m) ln(1 - p)] with p clamped to [eps, 1 - eps].
double BinaryCrossEntropy(double p, int isolation_label);
// -ln p_y with p_y clamped below at eps.
double CategoricalCrossEntropy(std::span<const float> probabilities, int label);

// One training input: isolation label m for the binary head, class label y
// for the multiclass head.
template <typename T>
struct BasicExample {
  std::span<const T> x;
  int label = 0;
};
using Example = BasicExample<float>;

struct LossAndGradient {
  double loss = 0.0;
  ParameterVector gradient;
};

// Exact backprop gradient of the mean loss over the batch. The head (and so
// the loss) follows params.layout().head(). Throws on empty batch, dimension
// or label errors.
ParameterVector Gradient(const NetworkSpec& spec, const ParameterVector& params,
                         std::span<const Example> batch);
LossAndGradient LossGradient(const NetworkSpec& spec,
                             const ParameterVector& params,
                             std::span<const Example> batch);
double MeanLoss(const NetworkSpec& spec, const ParameterVector& params,
                std::span<const Example> batch);

// Generic-precision kernels; explicitly instantiated for float and double.
// The double instantiation is the high-precision shadow path used by the
// gradient checks.
template <typename T>
void Forward(const NetworkSpec& spec, const ParameterLayout& layout,
             std::span<const T> params, std::span<const T> x,
             ForwardTrace<T>& trace);

template <typename T>
double BatchLossAndGradient(const NetworkSpec& spec,
                            const ParameterLayout& layout,
                            std::span<const T> params,
                            std::span<const BasicExample<T>> batch,
                            std::span<T> gradient);

}  // namespace isonet

#endif  // ISONET_NN_H_
