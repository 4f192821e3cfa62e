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

#include "isonet/dison.h"

#include <exception>
#include <stdexcept>
#include <string>
#include <thread>

namespace isonet {
namespace {

void CheckParamCount(std::size_t got, const ParameterLayout& layout,
                     std::string_view what) {
  if (got != layout.size()) {
    throw ProtocolError(std::string(what) + " carries " + std::to_string(got) +
                        " parameters, session layout has " +
                        std::to_string(layout.size()));
  }
}

void CheckRound(std::uint32_t got, int expected, std::string_view what) {
  if (static_cast<int>(got) != expected) {
    throw ProtocolError(std::string(what) + " for round " + std::to_string(got) +
                        ", expected round " + std::to_string(expected));
  }
}

std::vector<float> CopyValues(const ParameterVector& p) {
  return std::vector<float>(p.values().begin(), p.values().end());
}

}  // namespace

AggregationWeights::AggregationWeights(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("aggregation weight alpha must lie in (0, 1]");
  }
}

AggregationWeights AggregationWeights::FromOversampling(int batch_size,
                                                        int replicas) {
  if (batch_size < 1 || replicas < 1) {
    throw std::invalid_argument("batch size and replicas must be >= 1");
  }
  return AggregationWeights(static_cast<double>(batch_size) /
                            static_cast<double>(batch_size + replicas));
}

std::string_view MisclassModeName(MisclassMode mode) {
  switch (mode) {
    case MisclassMode::kNone:
      return "none";
    case MisclassMode::kAllWrong:
      return "all_wrong";
    case MisclassMode::kIdWrong:
      return "id_wrong";
    case MisclassMode::kOodWrong:
      return "ood_wrong";
  }
  return "unknown";
}

MisclassMode ParseMisclassMode(std::string_view name) {
  if (name == "none") return MisclassMode::kNone;
  if (name == "all_wrong") return MisclassMode::kAllWrong;
  if (name == "id_wrong") return MisclassMode::kIdWrong;
  if (name == "ood_wrong") return MisclassMode::kOodWrong;
  throw std::invalid_argument("unknown misclassification mode '" +
                              std::string(name) + "'");
}

void RoundPlan::Validate() const {
  if (local_steps < 1) throw std::invalid_argument("local steps E must be >= 1");
  if (misclass != MisclassMode::kNone && !class_conditional) {
    throw std::invalid_argument(
        "misclassification ablation requires class-conditional sampling");
  }
}

void DisonOptions::Validate() const {
  plan.Validate();
  isolation.Validate();
}

int PredictClass(const NetworkSpec& spec, const ParameterVector& pretrained,
                 std::span<const float> x) {
  const MulticlassOutput out = ForwardMulticlass(spec, pretrained, x);
  int best = 0;
  for (int c = 1; c < static_cast<int>(out.probabilities.size()); ++c) {
    if (out.probabilities[c] > out.probabilities[best]) best = c;
  }
  return best;
}

int AssignClass(int predicted, int num_classes, MisclassMode mode, bool is_ood,
                Rng& rng) {
  const bool replace = mode == MisclassMode::kAllWrong ||
                       (mode == MisclassMode::kIdWrong && !is_ood) ||
                       (mode == MisclassMode::kOodWrong && is_ood);
  if (!replace) return predicted;
  std::uniform_int_distribution<int> pick(0, num_classes - 2);
  const int c = pick(rng);
  return c >= predicted ? c + 1 : c;
}

ParameterVector Aggregate(const ParameterVector& source,
                          const ParameterVector& target,
                          AggregationWeights weights) {
  CheckSameLayout(source, target);
  ParameterVector out(source.layout());
  const double a = weights.alpha();
  const double b = weights.beta();
  std::span<float> dst = out.mutable_values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<float>(a * source[i] + b * target[i]);
  }
  return out;
}

ParameterVector SourceLocalUpdate(const NetworkSpec& spec,
                                  const ParameterVector& global,
                                  SourceBatchStream& batches,
                                  Optimizer& optimizer, int local_steps,
                                  int batch_size) {
  ParameterVector params = global;
  std::vector<Example> examples;
  for (int e = 0; e < local_steps; ++e) {
    const SourceBatchStream::Batch b = batches.Next(batch_size);
    examples.clear();
    for (const auto& x : b.inputs) examples.push_back({x, 0});
    optimizer.Step(params, Gradient(spec, params, examples));
  }
  return params;
}

ParameterVector TargetLocalUpdate(const NetworkSpec& spec,
                                  const ParameterVector& global,
                                  TargetStream& target, Optimizer& optimizer,
                                  int local_steps) {
  ParameterVector params = global;
  for (int e = 0; e < local_steps; ++e) {
    const Example ex{target.Next(), 1};
    optimizer.Step(params, Gradient(spec, params, std::span(&ex, 1)));
  }
  return params;
}

SourceNode::SourceNode(const NetworkSpec& spec, const ParameterVector& pretrained,
                       const Dataset& source, DisonOptions options,
                       IsolationSeeds seeds)
    : spec_(spec),
      pretrained_(&pretrained),
      source_(&source),
      options_(std::move(options)),
      seeds_(seeds) {
  options_.Validate();
  if (source.empty()) throw std::invalid_argument("empty source dataset");
}

SourceSessionLog SourceNode::Run(Endpoint& endpoint) {
  const IsolationOptions& iso = options_.isolation;
  const ConvergenceConfig& conv = iso.convergence;
  SourceSessionLog log;

  const Dataset* pool = source_;
  Dataset subset;
  if (options_.plan.class_conditional) {
    const int cls = static_cast<int>(endpoint.Expect<PredictedClass>().class_index);
    log.received_class = cls;
    subset = ClassSubset(*source_, cls);
    if (subset.empty()) {
      endpoint.Send({Terminate{0}});
      throw ProtocolError("source node holds no samples of class " +
                          std::to_string(cls));
    }
    pool = &subset;
  }

  SourceBatchStream batches(*pool, iso.augment, seeds_.source_batches);
  SourceEvaluator evaluator(*source_, conv.source_eval_subsample, seeds_.source_eval);

  ParameterVector global = InitializeGlobal(spec_, *pretrained_, seeds_.head_init);
  const ParameterLayout layout = global.layout();
  endpoint.Send({InitModel{CopyValues(global)}});

  Optimizer optimizer(iso.optimizer, layout.size());
  for (int r = 1;; ++r) {
    RoundMessage msg = endpoint.Receive();
    if (auto* done = std::get_if<Terminate>(&msg.body)) {
      log.final_round = static_cast<int>(done->final_round);
      return log;
    }
    auto* local = std::get_if<LocalParams>(&msg.body);
    if (local == nullptr) {
      throw ProtocolError("source node expected LocalParams, got " +
                          std::string(MessageTypeName(msg.type())));
    }
    if (r > conv.max_rounds) {
      throw ProtocolError("target node exceeded the round cap");
    }
    CheckRound(local->round, r, "LocalParams");
    CheckParamCount(local->params.size(), layout, "LocalParams");

    const ParameterVector source_params =
        SourceLocalUpdate(spec_, global, batches, optimizer,
                          options_.plan.local_steps, iso.batch_size);
    const ParameterVector target_params(layout, std::move(local->params));
    global = Aggregate(source_params, target_params, options_.plan.weights);

    RoundRecord rec;
    rec.round = r;
    rec.source_accuracy = evaluator.Accuracy(spec_, global);
    rec.source_converged = *rec.source_accuracy >= conv.tau;
    rec.checksum = global.Checksum();
    log.rounds.push_back(rec);
    endpoint.Send({GlobalParams{static_cast<std::uint32_t>(r),
                                rec.source_converged, CopyValues(global)}});
  }
}

TargetNode::TargetNode(const NetworkSpec& spec, const ParameterVector& pretrained,
                       std::span<const float> target, int patch_size,
                       DisonOptions options, IsolationSeeds seeds,
                       std::optional<int> reported_class)
    : spec_(spec),
      pretrained_(&pretrained),
      target_(target.begin(), target.end()),
      patch_size_(patch_size),
      options_(std::move(options)),
      seeds_(seeds),
      reported_class_(reported_class) {
  options_.Validate();
}

TargetSessionLog TargetNode::Run(Endpoint& endpoint) {
  const IsolationOptions& iso = options_.isolation;
  const ConvergenceConfig& conv = iso.convergence;
  TargetSessionLog log;

  if (options_.plan.class_conditional) {
    const int cls = reported_class_.value_or(PredictClass(spec_, *pretrained_, target_));
    if (cls < 0 || cls >= spec_.num_classes) {
      throw std::invalid_argument("reported class out of range");
    }
    log.reported_class = cls;
    endpoint.Send({PredictedClass{static_cast<std::uint32_t>(cls)}});
  }

  const ParameterLayout layout = ParameterLayout::Build(spec_, HeadKind::kBinary);
  RoundMessage first = endpoint.Receive();
  if (std::holds_alternative<Terminate>(first.body)) {
    throw ProtocolError("source node aborted the session");
  }
  auto* init = std::get_if<InitModel>(&first.body);
  if (init == nullptr) {
    throw ProtocolError("target node expected InitModel, got " +
                        std::string(MessageTypeName(first.type())));
  }
  CheckParamCount(init->params.size(), layout, "InitModel");
  ParameterVector local(layout, std::move(init->params));

  Optimizer optimizer(iso.optimizer, layout.size());
  TargetStream stream(target_, patch_size_, iso.augment, seeds_.target_augment);
  ConvergenceState state(conv.stability_window);
  ForwardTrace<float> scratch;

  for (int r = 1; r <= conv.max_rounds; ++r) {
    local = TargetLocalUpdate(spec_, local, stream, optimizer, options_.plan.local_steps);
    endpoint.Send({LocalParams{static_cast<std::uint32_t>(r), CopyValues(local)}});

    GlobalParams reply = endpoint.Expect<GlobalParams>();
    CheckRound(reply.round, r, "GlobalParams");
    CheckParamCount(reply.params.size(), layout, "GlobalParams");
    ParameterVector global(layout, std::move(reply.params));
    if (observer_) observer_(r, global);

    RoundRecord rec;
    rec.round = r;
    rec.target_score = BinaryProbability(spec_, global, target_, scratch);
    state.RecordTargetScore(rec.target_score);
    rec.target_stable = state.TargetStable();
    rec.source_converged = reply.source_converged;
    rec.checksum = global.Checksum();
    log.rounds.push_back(rec);

    const bool converged = rec.target_stable && rec.source_converged;
    if (converged || r == conv.max_rounds) {
      endpoint.Send({Terminate{static_cast<std::uint32_t>(r)}});
      log.score = r;
      log.censored = !converged;
      log.final_params = std::move(global);
      return log;
    }
    local = std::move(global);
  }
  throw std::logic_error("unreachable: round loop exited without terminating");
}

DisonResult RunDison(const NetworkSpec& spec, const ParameterVector& pretrained,
                     const Dataset& source, std::span<const float> target,
                     const DisonOptions& options, const IsolationSeeds& seeds,
                     const DisonRunOptions& run) {
  SourceNode source_node(spec, pretrained, source, options, seeds);
  TargetNode target_node(spec, pretrained, target, source.patch_size, options,
                         seeds, run.reported_class);
  if (run.on_global) target_node.set_observer(run.on_global);

  std::unique_ptr<Endpoint> source_end;
  std::unique_ptr<Endpoint> target_end;
  std::optional<TcpListener> listener;
  if (run.transport == TransportKind::kInProcess) {
    std::tie(source_end, target_end) = ChannelPair(run.transport_options);
  } else {
    listener.emplace(TcpListener::Bind("127.0.0.1:0"));
  }

  SourceSessionLog source_log;
  MessageStats source_sent;
  std::exception_ptr source_error;
  std::thread source_thread([&] {
    try {
      if (listener) source_end = listener->Accept(run.transport_options);
      source_log = source_node.Run(*source_end);
      source_sent = source_end->sent();
    } catch (...) {
      source_error = std::current_exception();
    }
    if (source_end) source_end->Close();
  });

  TargetSessionLog target_log;
  std::exception_ptr target_error;
  try {
    if (listener) {
      target_end = TcpDial("127.0.0.1:" + std::to_string(listener->port()),
                           run.transport_options);
    }
    target_log = target_node.Run(*target_end);
  } catch (...) {
    target_error = std::current_exception();
  }
  if (target_end) target_end->Close();
  source_thread.join();
  // The source-side failure is usually the root cause of a target failure.
  if (source_error) std::rethrow_exception(source_error);
  if (target_error) std::rethrow_exception(target_error);

  DisonResult result;
  result.score = target_log.score;
  result.censored = target_log.censored;
  result.reported_class = target_log.reported_class;
  result.rounds = std::move(target_log.rounds);
  for (std::size_t i = 0; i < result.rounds.size() && i < source_log.rounds.size(); ++i) {
    result.rounds[i].source_accuracy = source_log.rounds[i].source_accuracy;
  }
  result.final_params = std::move(target_log.final_params);
  result.final_checksum = result.final_params.Checksum();
  result.source_sent = source_sent;
  result.target_sent = target_end->sent();
  return result;
}

}  // namespace isonet
