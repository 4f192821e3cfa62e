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

#include "isonet/nn.h"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "isonet/random.h"

namespace isonet {
namespace {

// Offsets of one hidden layer's segments inside the flat vector.
struct HiddenOffsets {
  std::size_t weight, bias, gain, beta;
  int in, out;
};

struct Offsets {
  std::vector<HiddenOffsets> hidden;
  std::size_t head_weight = 0, head_bias = 0;
  int head_out = 0;
};

Offsets ComputeOffsets(const NetworkSpec& spec, HeadKind head) {
  Offsets off;
  std::size_t cursor = 0;
  int in = spec.input_dim;
  for (int width : spec.hidden_widths) {
    HiddenOffsets h{};
    h.in = in;
    h.out = width;
    h.weight = cursor;
    cursor += static_cast<std::size_t>(in) * width;
    h.bias = cursor;
    cursor += width;
    if (spec.use_instance_norm) {
      h.gain = cursor;
      cursor += width;
      h.beta = cursor;
      cursor += width;
    }
    off.hidden.push_back(h);
    in = width;
  }
  off.head_out = spec.head_outputs(head);
  off.head_weight = cursor;
  cursor += static_cast<std::size_t>(in) * off.head_out;
  off.head_bias = cursor;
  return off;
}

// Fixed-order dot product with eight interleaved partial sums, which the
// compiler can vectorize without reassociating.
template <typename T>
T Dot(const T* a, const T* b, int n) {
  T part[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) part[k] += a[i + k] * b[i + k];
  }
  T acc = ((part[0] + part[1]) + (part[2] + part[3])) +
          ((part[4] + part[5]) + (part[6] + part[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T StableSigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
void Softmax(std::span<const T> logits, std::vector<T>& out) {
  out.resize(logits.size());
  const T peak = *std::max_element(logits.begin(), logits.end());
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (T& v : out) v /= total;
}

void CheckInput(const NetworkSpec& spec, std::size_t x_size) {
  if (static_cast<int>(x_size) != spec.input_dim) {
    throw std::invalid_argument("input has " + std::to_string(x_size) +
                                " features, network expects " +
                                std::to_string(spec.input_dim));
  }
}

void CheckParams(const NetworkSpec& spec, const ParameterVector& params,
                 HeadKind head) {
  if (params.layout().head() != head) {
    throw std::invalid_argument("parameter vector has a " +
                                std::string(HeadKindName(params.layout().head())) +
                                " head, expected " +
                                std::string(HeadKindName(head)));
  }
  if (params.layout() != ParameterLayout::Build(spec, head)) {
    throw std::invalid_argument("parameter layout does not match spec");
  }
}

}  // namespace

std::string_view HeadKindName(HeadKind head) {
  return head == HeadKind::kBinary ? "binary" : "multiclass";
}

void NetworkSpec::Validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (hidden_widths.empty()) {
    throw std::invalid_argument("hidden_widths must be non-empty");
  }
  for (int w : hidden_widths) {
    if (w < 1) throw std::invalid_argument("hidden widths must be >= 1");
    if (use_instance_norm && w < 2) {
      throw std::invalid_argument(
          "hidden widths must be >= 2 when instance norm is enabled");
    }
  }
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
}

NetworkSpec NetworkSpec::FromPreset(std::string_view preset, int input_dim,
                                    int num_classes) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.num_classes = num_classes;
  if (preset == "slim") {
    spec.hidden_widths = {16, 16};
  } else if (preset == "base") {
    spec.hidden_widths = {32, 32};
  } else if (preset == "deep") {
    spec.hidden_widths = {64, 32, 32};
  } else {
    throw std::invalid_argument("unknown network preset '" +
                                std::string(preset) + "'");
  }
  spec.Validate();
  return spec;
}

ParameterLayout ParameterLayout::Build(const NetworkSpec& spec, HeadKind head) {
  spec.Validate();
  ParameterLayout layout;
  layout.head_ = head;
  std::size_t cursor = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape,
                 bool in_head) {
    std::size_t size = 1;
    for (std::size_t d : shape) size *= d;
    layout.segments_.push_back(
        Segment{std::move(name), std::move(shape), cursor, size, in_head});
    cursor += size;
  };
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden_widths.size(); ++l) {
    const std::size_t w = spec.hidden_widths[l];
    const std::string idx = std::to_string(l);
    add("hidden" + idx + ".weight", {w, in}, false);
    add("hidden" + idx + ".bias", {w}, false);
    if (spec.use_instance_norm) {
      add("norm" + idx + ".gain", {w}, false);
      add("norm" + idx + ".bias", {w}, false);
    }
    in = w;
  }
  layout.feature_size_ = cursor;
  const std::size_t out = spec.head_outputs(head);
  add("head.weight", {out, in}, true);
  add("head.bias", {out}, true);
  layout.size_ = cursor;
  return layout;
}

const Segment& ParameterLayout::Find(std::string_view name) const {
  for (const Segment& s : segments_) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no parameter segment named '" + std::string(name) +
                          "'");
}

ParameterVector::ParameterVector(ParameterLayout layout)
    : layout_(std::move(layout)), values_(layout_.size(), 0.0f) {}

ParameterVector::ParameterVector(ParameterLayout layout,
                                 std::vector<float> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size()) {
    throw std::invalid_argument("parameter count " +
                                std::to_string(values_.size()) +
                                " does not match layout size " +
                                std::to_string(layout_.size()));
  }
}

std::span<const float> ParameterVector::segment(std::string_view name) const {
  const Segment& s = layout_.Find(name);
  return std::span<const float>(values_).subspan(s.offset, s.size);
}

std::span<float> ParameterVector::mutable_segment(std::string_view name) {
  const Segment& s = layout_.Find(name);
  return std::span<float>(values_).subspan(s.offset, s.size);
}

void CheckSameLayout(const ParameterVector& a, const ParameterVector& b) {
  if (a.layout() != b.layout()) {
    throw std::invalid_argument("parameter layouts differ");
  }
}

ParameterVector& ParameterVector::operator+=(const ParameterVector& other) {
  CheckSameLayout(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other[i];
  return *this;
}

ParameterVector& ParameterVector::operator*=(float scale) {
  for (float& v : values_) v *= scale;
  return *this;
}

ParameterVector operator+(ParameterVector a, const ParameterVector& b) {
  a += b;
  return a;
}

ParameterVector operator*(float scale, ParameterVector v) {
  v *= scale;
  return v;
}

std::uint32_t ParameterVector::Checksum() const {
  static_assert(std::endian::native == std::endian::little,
                "checksum assumes a little-endian host");
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(values_.data()),
              static_cast<uInt>(values_.size() * sizeof(float)));
  return static_cast<std::uint32_t>(crc);
}

bool operator==(const ParameterVector& a, const ParameterVector& b) {
  return a.layout_ == b.layout_ && a.values_.size() == b.values_.size() &&
         std::memcmp(a.values_.data(), b.values_.data(),
                     a.values_.size() * sizeof(float)) == 0;
}

ParameterVector InitParams(const NetworkSpec& spec, HeadKind head) {
  ParameterVector params(ParameterLayout::Build(spec, head));
  Rng rng(spec.seed);
  const Offsets off = ComputeOffsets(spec, head);
  std::span<float> v = params.mutable_values();
  auto fill_uniform = [&](std::size_t begin, std::size_t count, int fan_in) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) v[begin + i] = dist(rng);
  };
  for (const HiddenOffsets& h : off.hidden) {
    fill_uniform(h.weight, static_cast<std::size_t>(h.in) * h.out, h.in);
    fill_uniform(h.bias, h.out, h.in);
    if (spec.use_instance_norm) {
      std::fill_n(v.begin() + h.gain, h.out, 1.0f);
      std::fill_n(v.begin() + h.beta, h.out, 0.0f);
    }
  }
  const int latent = spec.latent_dim();
  fill_uniform(off.head_weight, static_cast<std::size_t>(latent) * off.head_out,
               latent);
  fill_uniform(off.head_bias, off.head_out, latent);
  return params;
}

std::vector<float> InstanceNormalize(std::span<const float> activation,
                                     std::span<const float> gain,
                                     std::span<const float> bias) {
  if (activation.empty() || gain.size() != activation.size() ||
      bias.size() != activation.size()) {
    throw std::invalid_argument("instance norm: mismatched lengths");
  }
  const float n = static_cast<float>(activation.size());
  float mean = 0;
  for (float a : activation) mean += a;
  mean /= n;
  float var = 0;
  for (float a : activation) var += (a - mean) * (a - mean);
  var /= n;
  const float inv_std = 1.0f / std::sqrt(var + static_cast<float>(kNormEpsilon));
  std::vector<float> out(activation.size());
  for (std::size_t i = 0; i < activation.size(); ++i) {
    out[i] = gain[i] * (activation[i] - mean) * inv_std + bias[i];
  }
  return out;
}

template <typename T>
void Forward(const NetworkSpec& spec, const ParameterLayout& layout,
             std::span<const T> params, std::span<const T> x,
             ForwardTrace<T>& trace) {
  CheckInput(spec, x.size());
  const Offsets off = ComputeOffsets(spec, layout.head());
  const std::size_t depth = off.hidden.size();
  trace.inputs.resize(depth);
  trace.linear.resize(depth);
  trace.normalized.resize(depth);
  trace.inv_std.resize(depth);
  trace.activations.resize(depth);

  std::span<const T> in = x;
  for (std::size_t l = 0; l < depth; ++l) {
    const HiddenOffsets& h = off.hidden[l];
    trace.inputs[l].assign(in.begin(), in.end());
    std::vector<T>& z = trace.linear[l];
    z.resize(h.out);
    const T* w = params.data() + h.weight;
    const T* b = params.data() + h.bias;
    for (int o = 0; o < h.out; ++o) {
      const T* row = w + static_cast<std::size_t>(o) * h.in;
      z[o] = Dot(row, in.data(), h.in) + b[o];
    }
    std::vector<T>& a = trace.activations[l];
    a.resize(h.out);
    if (spec.use_instance_norm) {
      T mean = 0;
      for (T v : z) mean += v;
      mean /= static_cast<T>(h.out);
      T var = 0;
      for (T v : z) var += (v - mean) * (v - mean);
      var /= static_cast<T>(h.out);
      const T inv_std = T(1) / std::sqrt(var + static_cast<T>(kNormEpsilon));
      trace.inv_std[l] = inv_std;
      std::vector<T>& xhat = trace.normalized[l];
      xhat.resize(h.out);
      const T* gain = params.data() + h.gain;
      const T* beta = params.data() + h.beta;
      for (int o = 0; o < h.out; ++o) {
        xhat[o] = (z[o] - mean) * inv_std;
        const T u = gain[o] * xhat[o] + beta[o];
        a[o] = u > T(0) ? u : T(0);
      }
    } else {
      for (int o = 0; o < h.out; ++o) a[o] = z[o] > T(0) ? z[o] : T(0);
    }
    in = a;
  }

  trace.logits.resize(off.head_out);
  const int latent = static_cast<int>(in.size());
  const T* hw = params.data() + off.head_weight;
  const T* hb = params.data() + off.head_bias;
  for (int o = 0; o < off.head_out; ++o) {
    const T* row = hw + static_cast<std::size_t>(o) * latent;
    trace.logits[o] = Dot(row, in.data(), latent) + hb[o];
  }
  if (layout.head() == HeadKind::kBinary) {
    trace.outputs.assign(1, StableSigmoid(trace.logits[0]));
  } else {
    Softmax<T>(trace.logits, trace.outputs);
  }
}

template <typename T>
double BatchLossAndGradient(const NetworkSpec& spec,
                            const ParameterLayout& layout,
                            std::span<const T> params,
                            std::span<const BasicExample<T>> batch,
                            std::span<T> gradient) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (params.size() != layout.size() || gradient.size() != layout.size()) {
    throw std::invalid_argument("parameter/gradient size mismatch");
  }
  const Offsets off = ComputeOffsets(spec, layout.head());
  const bool binary = layout.head() == HeadKind::kBinary;
  const std::size_t depth = off.hidden.size();
  const T weight = T(1) / static_cast<T>(batch.size());
  const T eps = static_cast<T>(kClampEpsilon);
  std::fill(gradient.begin(), gradient.end(), T(0));

  ForwardTrace<T> trace;
  std::vector<T> dlogits(off.head_out);
  std::vector<T> da, du, dxhat, dnext;
  double total_loss = 0.0;

  for (const BasicExample<T>& ex : batch) {
    if (binary ? (ex.label != 0 && ex.label != 1)
               : (ex.label < 0 || ex.label >= spec.num_classes)) {
      throw std::invalid_argument("label " + std::to_string(ex.label) +
                                  " out of range for " +
                                  std::string(HeadKindName(layout.head())) +
                                  " head");
    }
    Forward<T>(spec, layout, params, ex.x, trace);

    if (binary) {
      const T p = trace.outputs[0];
      total_loss += BinaryCrossEntropy(static_cast<double>(p), ex.label);
      const bool clamped = p < eps || p > T(1) - eps;
      dlogits[0] = clamped ? T(0) : (p - static_cast<T>(ex.label)) * weight;
    } else {
      const T py = trace.outputs[ex.label];
      total_loss += -std::log(std::max(static_cast<double>(py),
                                       static_cast<double>(kClampEpsilon)));
      const bool clamped = py < eps;
      for (int c = 0; c < off.head_out; ++c) {
        const T target = c == ex.label ? T(1) : T(0);
        dlogits[c] = clamped ? T(0) : (trace.outputs[c] - target) * weight;
      }
    }

    // Head.
    const std::vector<T>& latent = trace.activations[depth - 1];
    const int latent_dim = static_cast<int>(latent.size());
    const T* hw = params.data() + off.head_weight;
    T* ghw = gradient.data() + off.head_weight;
    T* ghb = gradient.data() + off.head_bias;
    da.assign(latent_dim, T(0));
    for (int o = 0; o < off.head_out; ++o) {
      const T d = dlogits[o];
      ghb[o] += d;
      const std::size_t row = static_cast<std::size_t>(o) * latent_dim;
      for (int j = 0; j < latent_dim; ++j) {
        ghw[row + j] += d * latent[j];
        da[j] += hw[row + j] * d;
      }
    }

    // Hidden layers, last to first.
    for (std::size_t li = depth; li-- > 0;) {
      const HiddenOffsets& h = off.hidden[li];
      const std::vector<T>& a = trace.activations[li];
      du.resize(h.out);
      for (int o = 0; o < h.out; ++o) du[o] = a[o] > T(0) ? da[o] : T(0);

      std::vector<T>& dz = du;  // overwritten in place below
      if (spec.use_instance_norm) {
        const std::vector<T>& xhat = trace.normalized[li];
        const T* gain = params.data() + h.gain;
        T* ggain = gradient.data() + h.gain;
        T* gbeta = gradient.data() + h.beta;
        dxhat.resize(h.out);
        T sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int o = 0; o < h.out; ++o) {
          ggain[o] += du[o] * xhat[o];
          gbeta[o] += du[o];
          dxhat[o] = du[o] * gain[o];
          sum_dxhat += dxhat[o];
          sum_dxhat_xhat += dxhat[o] * xhat[o];
        }
        const T n = static_cast<T>(h.out);
        const T scale = trace.inv_std[li] / n;
        for (int o = 0; o < h.out; ++o) {
          dz[o] = scale * (n * dxhat[o] - sum_dxhat - xhat[o] * sum_dxhat_xhat);
        }
      }

      const std::vector<T>& in = trace.inputs[li];
      const T* w = params.data() + h.weight;
      T* gw = gradient.data() + h.weight;
      T* gb = gradient.data() + h.bias;
      const bool need_input_grad = li > 0;
      if (need_input_grad) dnext.assign(h.in, T(0));
      for (int o = 0; o < h.out; ++o) {
        const T d = dz[o];
        gb[o] += d;
        if (d == T(0)) continue;
        const std::size_t row = static_cast<std::size_t>(o) * h.in;
        for (int i = 0; i < h.in; ++i) gw[row + i] += d * in[i];
        if (need_input_grad) {
          for (int i = 0; i < h.in; ++i) dnext[i] += w[row + i] * d;
        }
      }
      if (need_input_grad) std::swap(da, dnext);
    }
  }
  return total_loss / static_cast<double>(batch.size());
}

template void Forward<float>(const NetworkSpec&, const ParameterLayout&,
                             std::span<const float>, std::span<const float>,
                             ForwardTrace<float>&);
template void Forward<double>(const NetworkSpec&, const ParameterLayout&,
                              std::span<const double>, std::span<const double>,
                              ForwardTrace<double>&);
template double BatchLossAndGradient<float>(const NetworkSpec&,
                                            const ParameterLayout&,
                                            std::span<const float>,
                                            std::span<const BasicExample<float>>,
                                            std::span<float>);
template double BatchLossAndGradient<double>(
    const NetworkSpec&, const ParameterLayout&, std::span<const double>,
    std::span<const BasicExample<double>>, std::span<double>);

BinaryOutput ForwardBinary(const NetworkSpec& spec,
                           const ParameterVector& params,
                           std::span<const float> x) {
  CheckParams(spec, params, HeadKind::kBinary);
  BinaryOutput out;
  Forward<float>(spec, params.layout(), params.values(), x, out.trace);
  out.probability = out.trace.outputs[0];
  return out;
}

MulticlassOutput ForwardMulticlass(const NetworkSpec& spec,
                                   const ParameterVector& params,
                                   std::span<const float> x) {
  CheckParams(spec, params, HeadKind::kMulticlass);
  MulticlassOutput out;
  Forward<float>(spec, params.layout(), params.values(), x, out.trace);
  out.probabilities = out.trace.outputs;
  return out;
}

float BinaryProbability(const NetworkSpec& spec, const ParameterVector& params,
                        std::span<const float> x,
                        ForwardTrace<float>& scratch) {
  if (params.layout().head() != HeadKind::kBinary) {
    throw std::invalid_argument("binary head required");
  }
  Forward<float>(spec, params.layout(), params.values(), x, scratch);
  return scratch.outputs[0];
}

double BinaryCrossEntropy(double p, int isolation_label) {
  const double eps = kClampEpsilon;
  const double pc = std::clamp(p, eps, 1.0 - eps);
  return isolation_label == 1 ? -std::log(pc) : -std::log(1.0 - pc);
}

double CategoricalCrossEntropy(std::span<const float> probabilities,
                               int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size()) {
    throw std::invalid_argument("label out of range");
  }
  return -std::log(std::max(static_cast<double>(probabilities[label]),
                            static_cast<double>(kClampEpsilon)));
}

LossAndGradient LossGradient(const NetworkSpec& spec,
                             const ParameterVector& params,
                             std::span<const Example> batch) {
  CheckParams(spec, params, params.layout().head());
  LossAndGradient out{0.0, ParameterVector(params.layout())};
  out.loss = BatchLossAndGradient<float>(spec, params.layout(), params.values(),
                                         batch, out.gradient.mutable_values());
  return out;
}

ParameterVector Gradient(const NetworkSpec& spec, const ParameterVector& params,
                         std::span<const Example> batch) {
  return LossGradient(spec, params, batch).gradient;
}

double MeanLoss(const NetworkSpec& spec, const ParameterVector& params,
                std::span<const Example> batch) {
  CheckParams(spec, params, params.layout().head());
  if (batch.empty()) throw std::invalid_argument("empty batch");
  ForwardTrace<float> trace;
  double total = 0.0;
  for (const Example& ex : batch) {
    Forward<float>(spec, params.layout(), params.values(), ex.x, trace);
    total += params.layout().head() == HeadKind::kBinary
                 ? BinaryCrossEntropy(trace.outputs[0], ex.label)
                 : CategoricalCrossEntropy(trace.outputs, ex.label);
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace isonet
