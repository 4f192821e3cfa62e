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

// Experiment harness: per-seed data generation and pre-training, scoring of a
// target pool in centralized, DIsoN or CC-DIsoN mode, report emission and
// ablation sweeps. Both the CLI and the acceptance tests drive it.

#ifndef ISONET_EXPERIMENT_H_
#define ISONET_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isonet/data.h"
#include "isonet/dison.h"
#include "isonet/isolation.h"
#include "isonet/nn.h"
#include "isonet/pretrain.h"
#include "json.hpp"

namespace isonet {

enum class RunMode { kCentralized, kDison, kCcDison };
enum class TransportMode { kInProcess, kTcp };
enum class NodeRole { kSource, kTarget };

std::string_view RunModeName(RunMode mode);
RunMode ParseRunMode(std::string_view name);
std::string_view TransportModeName(TransportMode mode);
TransportMode ParseTransportMode(std::string_view name);
std::string_view NodeRoleName(NodeRole role);
NodeRole ParseNodeRole(std::string_view name);

struct ExperimentConfig {
  RunMode mode = RunMode::kCcDison;
  TransportMode transport = TransportMode::kInProcess;
  std::optional<NodeRole> role;  // tcp only
  std::string addr = "127.0.0.1:7411";
  double transport_timeout_s = 30.0;

  double alpha = 0.8;
  int local_steps = 0;  // 0: round(|D_s| / batch_size), at least 1
  MisclassMode misclass = MisclassMode::kNone;
  IsolationOptions isolation;

  SyntheticConfig data;  // data.seed is replaced by the run seed
  std::string preset = "base";
  bool use_instance_norm = true;
  PretrainConfig pretrain;  // spec and seed are filled in per run seed

  // Optional inputs. With `dataset_dir` the splits are read from
  // train.isds / id_test.isds / ood_test.isds instead of being generated;
  // with `checkpoint` pre-training is skipped.
  std::string dataset_dir;
  std::string checkpoint;

  int n_id = 50;
  int n_ood = 50;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int workers = 1;
  std::string out;  // report directory; empty writes nothing

  // Throws std::invalid_argument on inconsistent settings.
  void Validate() const;
  int ResolveLocalSteps(std::size_t source_size) const;
  DisonOptions MakeDisonOptions(std::size_t source_size) const;

  nlohmann::json ToJson() const;
  // Keys missing from `json` keep their defaults; unknown keys throw.
  static ExperimentConfig FromJson(const nlohmann::json& json);
};

// Everything one run seed needs: the splits and the primary model.
struct SeedContext {
  std::uint64_t seed = 0;
  NetworkSpec spec;
  Dataset train;
  Dataset id_test;
  Dataset ood_test;
  ParameterVector pretrained;
  double pretrain_accuracy = 0.0;
};

SeedContext PrepareSeed(const ExperimentConfig& config, std::uint64_t seed);

// One pool entry. `target_id` is the position in the seed-shuffled pool, so
// the index a source node sees carries no label information.
struct PoolEntry {
  int target_id = 0;
  bool ood = false;
  int split_index = 0;  // index into id_test or ood_test
};

std::vector<PoolEntry> TargetPool(const ExperimentConfig& config,
                                  std::uint64_t seed);

IsolationSeeds TargetSeeds(std::uint64_t seed, int target_id);

struct TargetRecord {
  std::uint64_t seed = 0;
  int target_id = 0;
  bool ood = false;
  int split_index = 0;
  int predicted_class = -1;
  int reported_class = -1;  // class sent to SN; -1 outside CC mode
  int score = 0;            // R (decentralized) or K (centralized)
  bool censored = false;
  int rounds = 0;           // transcript length
  float final_target_score = 0.0f;
  double final_source_accuracy = -1.0;  // -1 when never evaluated
  double msp = 0.0;
  std::uint32_t final_checksum = 0;

  friend bool operator==(const TargetRecord&, const TargetRecord&) = default;
};

TargetRecord ScoreTarget(const ExperimentConfig& config,
                         const SeedContext& context, const PoolEntry& entry);

struct GroupStats {
  int count = 0;
  int censored = 0;
  double mean_rounds = 0.0;
  std::vector<double> quantiles;  // 25th, 50th, 75th percentile

  friend bool operator==(const GroupStats&, const GroupStats&) = default;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  double auroc = 0.0;
  double fpr95 = 0.0;
  double msp_auroc = 0.0;
  double msp_fpr95 = 0.0;
  GroupStats id;
  GroupStats ood;

  friend bool operator==(const SeedSummary&, const SeedSummary&) = default;
};

// Sample standard deviation; 0 for a single value.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;

  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

MeanStd ComputeMeanStd(std::span<const double> values);

struct ReportAggregate {
  MeanStd auroc;
  MeanStd fpr95;
  MeanStd msp_auroc;
  MeanStd msp_fpr95;
  MeanStd id_mean_rounds;
  MeanStd ood_mean_rounds;

  friend bool operator==(const ReportAggregate&, const ReportAggregate&) = default;
};

// Scores are round counts: ID targets are expected to take longer, so the
// rounds themselves are the "higher is more ID" score.
SeedSummary Summarize(std::uint64_t seed, std::span<const TargetRecord> records);
ReportAggregate AggregateSummaries(std::span<const SeedSummary> summaries);

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<double> pretrain_accuracy;  // per seed
  std::vector<int> local_steps;           // per seed
  std::vector<TargetRecord> targets;
  std::vector<SeedSummary> seeds;
  ReportAggregate aggregate;

  nlohmann::json ToJson() const;
};

// Recomputes summaries and the aggregate from the target records.
void Finalize(ExperimentReport& report);

ExperimentReport RunExperiment(const ExperimentConfig& config);
// Reuses prepared seeds (one per config.seeds entry, same order).
ExperimentReport RunExperiment(const ExperimentConfig& config,
                               std::span<const SeedContext> contexts);

// Dual-process mode. The source role listens on config.addr and serves one
// session per pool target; the target role dials, drives the sessions and
// produces the report. Only the target side knows OOD ground truth.
struct SourceServiceLog {
  std::uint64_t seed = 0;
  std::vector<int> rounds;  // per session, in pool order
};
std::vector<SourceServiceLog> RunSourceService(const ExperimentConfig& config);
ExperimentReport RunTargetClient(const ExperimentConfig& config);

std::string TargetsCsv(std::span<const TargetRecord> records);
std::vector<TargetRecord> ParseTargetsCsv(std::string_view csv);

// Writes report.json and targets.csv into `dir`.
void WriteReport(const std::filesystem::path& dir,
                 const ExperimentReport& report);

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> mismatches;
};

// Recomputes every aggregate number of a written report from its CSV.
VerifyResult VerifyReport(const std::filesystem::path& dir);

enum class SweepKind { kAlpha, kAugment, kWidth };

std::string_view SweepKindName(SweepKind kind);
SweepKind ParseSweepKind(std::string_view name);

struct SweepPoint {
  std::string label;
  ExperimentConfig config;
};

// Empty `values` selects the default grid: alpha {0.4, 0.5, 0.8, 0.95},
// the four augmentation settings, or the slim/base/deep presets.
std::vector<SweepPoint> SweepPoints(const ExperimentConfig& base,
                                    SweepKind kind,
                                    std::span<const std::string> values = {});

struct SweepResult {
  SweepKind kind = SweepKind::kAlpha;
  std::vector<std::string> labels;
  std::vector<ExperimentReport> reports;

  // One row per point x seed.
  std::string TidyCsv() const;
  nlohmann::json ToJson() const;
};

// Points sharing the network preset reuse the prepared seeds.
SweepResult RunSweep(const ExperimentConfig& base, SweepKind kind,
                     std::span<const std::string> values = {});

// Writes sweep.csv, sweep.json and one report directory per point.
void WriteSweep(const std::filesystem::path& dir, const SweepResult& result);

}  // namespace isonet

#endif  // ISONET_EXPERIMENT_H_
