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

// Two-node decentralized isolation. The source node (SN) holds the training
// set, the target node (TN) holds the one target input; they exchange only
// parameter vectors, a class index and control flags.
//
// Per round r = 1, 2, ...:
//   TN: E local steps on x_t (label 1)         -> LocalParams(r, theta_T)
//   SN: E local steps on source batches (label 0), then
//       theta^(r) = alpha * theta_S + (1 - alpha) * theta_T,
//       source criterion on D_s                -> GlobalParams(r, theta^(r), flag)
//   TN: target criterion on theta^(r); stops with Terminate(r) when both hold
//       or r reaches the round cap.
// The class-conditional variant first sends PredictedClass(y_hat) from TN and
// restricts SN batches to class y_hat.

#ifndef ISONET_DISON_H_
#define ISONET_DISON_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "isonet/data.h"
#include "isonet/isolation.h"
#include "isonet/nn.h"
#include "isonet/optimizer.h"
#include "isonet/transport.h"

namespace isonet {

// alpha weights the source model, beta = 1 - alpha the target model.
class AggregationWeights {
 public:
  explicit AggregationWeights(double alpha = 0.8);

  // alpha = |B_s| / (|B_s| + N): the weights under which one-step local
  // SGD reproduces centralized training with N target replicas.
  static AggregationWeights FromOversampling(int batch_size, int replicas);

  double alpha() const { return alpha_; }
  double beta() const { return 1.0 - alpha_; }

 private:
  double alpha_;
};

enum class MisclassMode { kNone, kAllWrong, kIdWrong, kOodWrong };

std::string_view MisclassModeName(MisclassMode mode);
MisclassMode ParseMisclassMode(std::string_view name);

struct RoundPlan {
  int local_steps = 1;  // E
  AggregationWeights weights;
  bool class_conditional = false;
  MisclassMode misclass = MisclassMode::kNone;

  void Validate() const;
};

// Shared by both nodes; the round cap is options.isolation.convergence.max_rounds.
struct DisonOptions {
  RoundPlan plan;
  IsolationOptions isolation;

  void Validate() const;
};

inline ParameterVector InitializeGlobal(const NetworkSpec& spec,
                                        const ParameterVector& pretrained,
                                        std::uint64_t seed) {
  return InitializeIsolationNetwork(spec, pretrained, seed);
}

// Argmax of the primary model's softmax; ties go to the lowest index.
int PredictClass(const NetworkSpec& spec, const ParameterVector& pretrained,
                 std::span<const float> x);

// Applies the misclassification ablation: replaces `predicted` by a class
// drawn uniformly from the other classes when the mode selects this target.
int AssignClass(int predicted, int num_classes, MisclassMode mode, bool is_ood,
                Rng& rng);

// alpha * source + beta * target, evaluated in double and rounded once.
ParameterVector Aggregate(const ParameterVector& source,
                          const ParameterVector& target,
                          AggregationWeights weights);

ParameterVector SourceLocalUpdate(const NetworkSpec& spec,
                                  const ParameterVector& global,
                                  SourceBatchStream& batches,
                                  Optimizer& optimizer, int local_steps,
                                  int batch_size);

ParameterVector TargetLocalUpdate(const NetworkSpec& spec,
                                  const ParameterVector& global,
                                  TargetStream& target, Optimizer& optimizer,
                                  int local_steps);

struct SourceSessionLog {
  std::optional<int> received_class;
  std::vector<RoundRecord> rounds;  // source-side fields only
  int final_round = 0;
};

class SourceNode {
 public:
  SourceNode(const NetworkSpec& spec, const ParameterVector& pretrained,
             const Dataset& source, DisonOptions options, IsolationSeeds seeds);

  // Serves one protocol session. An empty class subset is reported to the
  // peer with Terminate(0) and then thrown as ProtocolError.
  SourceSessionLog Run(Endpoint& endpoint);

 private:
  NetworkSpec spec_;
  const ParameterVector* pretrained_;
  const Dataset* source_;
  DisonOptions options_;
  IsolationSeeds seeds_;
};

struct TargetSessionLog {
  int score = 0;
  bool censored = false;
  std::optional<int> reported_class;
  std::vector<RoundRecord> rounds;
  ParameterVector final_params;
};

class TargetNode {
 public:
  // `reported_class` overrides the class sent in class-conditional mode
  // (used by the misclassification ablation harness).
  TargetNode(const NetworkSpec& spec, const ParameterVector& pretrained,
             std::span<const float> target, int patch_size,
             DisonOptions options, IsolationSeeds seeds,
             std::optional<int> reported_class = std::nullopt);

  // Called with every received global model.
  void set_observer(StepObserver observer) { observer_ = std::move(observer); }

  TargetSessionLog Run(Endpoint& endpoint);

 private:
  NetworkSpec spec_;
  const ParameterVector* pretrained_;
  std::vector<float> target_;
  int patch_size_;
  DisonOptions options_;
  IsolationSeeds seeds_;
  std::optional<int> reported_class_;
  StepObserver observer_;
};

enum class TransportKind { kInProcess, kTcpLoopback };

struct DisonRunOptions {
  TransportKind transport = TransportKind::kInProcess;
  TransportOptions transport_options;
  std::optional<int> reported_class;
  StepObserver on_global;
};

struct DisonResult {
  int score = 0;
  bool censored = false;
  std::optional<int> reported_class;
  std::vector<RoundRecord> rounds;  // merged SN + TN view
  std::uint32_t final_checksum = 0;
  ParameterVector final_params;
  MessageStats source_sent;
  MessageStats target_sent;
};

// Runs SN on a worker thread and TN on the calling thread, connected by the
// selected transport, and merges both transcripts.
DisonResult RunDison(const NetworkSpec& spec, const ParameterVector& pretrained,
                     const Dataset& source, std::span<const float> target,
                     const DisonOptions& options, const IsolationSeeds& seeds,
                     const DisonRunOptions& run = {});

}  // namespace isonet

#endif  // ISONET_DISON_H_
