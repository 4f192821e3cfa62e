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

#include "isonet/experiment.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "binary_io.h"
#include "isonet/checkpoint.h"
#include "isonet/metrics.h"
#include "isonet/transport.h"

namespace isonet {
namespace {

using nlohmann::json;

template <typename Enum, std::size_t N>
Enum ParseName(std::string_view name, const std::pair<Enum, const char*> (&table)[N],
               const char* what) {
  for (const auto& [value, text] : table) {
    if (name == text) return value;
  }
  throw std::invalid_argument("unknown " + std::string(what) + " '" +
                              std::string(name) + "'");
}

template <typename Enum, std::size_t N>
std::string_view NameOf(Enum value, const std::pair<Enum, const char*> (&table)[N]) {
  for (const auto& [v, text] : table) {
    if (v == value) return text;
  }
  return "?";
}

constexpr std::pair<RunMode, const char*> kRunModes[] = {
    {RunMode::kCentralized, "centralized"},
    {RunMode::kDison, "dison"},
    {RunMode::kCcDison, "cc_dison"}};
constexpr std::pair<TransportMode, const char*> kTransports[] = {
    {TransportMode::kInProcess, "inproc"}, {TransportMode::kTcp, "tcp"}};
constexpr std::pair<NodeRole, const char*> kRoles[] = {
    {NodeRole::kSource, "source"}, {NodeRole::kTarget, "target"}};
constexpr std::pair<SweepKind, const char*> kSweepKinds[] = {
    {SweepKind::kAlpha, "alpha"},
    {SweepKind::kAugment, "augment"},
    {SweepKind::kWidth, "width"}};

// Reads json[key] into `out` when present.
template <typename T>
void Read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it != j.end()) out = it->get<T>();
}

void CheckKeys(const json& j, std::initializer_list<const char*> allowed,
               const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!names.contains(key)) {
      throw std::invalid_argument("unknown " + where + " key '" + key + "'");
    }
  }
}

json DataToJson(const SyntheticConfig& d) {
  return json{{"patch_size", d.patch_size},
              {"num_classes", d.num_classes},
              {"train_per_class", d.train_per_class},
              {"id_test_per_class", d.id_test_per_class},
              {"ood_test_count", d.ood_test_count},
              {"background", d.background},
              {"noise_sigma", d.noise_sigma},
              {"blob_amplitude", d.blob_amplitude},
              {"blob_sigma", d.blob_sigma},
              {"class_offset", d.class_offset},
              {"center_jitter", d.center_jitter},
              {"artifact", ArtifactKindName(d.artifact)},
              {"artifact_size", d.artifact_size},
              {"artifact_value", d.artifact_value},
              {"ood_kind", OodKindName(d.ood)},
              {"shift_brightness", d.shift_brightness},
              {"shift_contrast", d.shift_contrast}};
}

SyntheticConfig DataFromJson(const json& j, SyntheticConfig d) {
  CheckKeys(j,
            {"patch_size", "num_classes", "train_per_class", "id_test_per_class",
             "ood_test_count", "background", "noise_sigma", "blob_amplitude",
             "blob_sigma", "class_offset", "center_jitter", "artifact",
             "artifact_size", "artifact_value", "ood_kind", "shift_brightness",
             "shift_contrast"},
            "data");
  Read(j, "patch_size", d.patch_size);
  Read(j, "num_classes", d.num_classes);
  Read(j, "train_per_class", d.train_per_class);
  Read(j, "id_test_per_class", d.id_test_per_class);
  Read(j, "ood_test_count", d.ood_test_count);
  Read(j, "background", d.background);
  Read(j, "noise_sigma", d.noise_sigma);
  Read(j, "blob_amplitude", d.blob_amplitude);
  Read(j, "blob_sigma", d.blob_sigma);
  Read(j, "class_offset", d.class_offset);
  Read(j, "center_jitter", d.center_jitter);
  if (j.contains("artifact")) {
    d.artifact = ParseArtifactKind(j["artifact"].get<std::string>());
  }
  Read(j, "artifact_size", d.artifact_size);
  Read(j, "artifact_value", d.artifact_value);
  if (j.contains("ood_kind")) d.ood = ParseOodKind(j["ood_kind"].get<std::string>());
  Read(j, "shift_brightness", d.shift_brightness);
  Read(j, "shift_contrast", d.shift_contrast);
  return d;
}

json OptimizerToJson(const OptimizerConfig& o) {
  return json{{"kind", OptimizerKindName(o.kind)},
              {"learning_rate", o.learning_rate},
              {"momentum", o.momentum}};
}

OptimizerConfig OptimizerFromJson(const json& j, OptimizerConfig o,
                                  const std::string& where) {
  CheckKeys(j, {"kind", "learning_rate", "momentum"}, where);
  if (j.contains("kind")) o.kind = ParseOptimizerKind(j["kind"].get<std::string>());
  Read(j, "learning_rate", o.learning_rate);
  Read(j, "momentum", o.momentum);
  return o;
}

std::string AugmentLabel(const AugmentPolicy& policy) {
  return policy.enabled ? std::string(AugmentSideName(policy.apply_on)) : "none";
}

void SetAugment(AugmentPolicy& policy, std::string_view label) {
  policy.apply_on = ParseAugmentSide(label);
  policy.enabled = policy.apply_on != AugmentSide::kNone;
}

std::string FormatDouble(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string FormatFloat(float v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

GroupStats Group(std::span<const TargetRecord> records, bool ood) {
  GroupStats g;
  std::vector<int> rounds;
  for (const TargetRecord& r : records) {
    if (r.ood != ood) continue;
    rounds.push_back(r.score);
    g.censored += r.censored ? 1 : 0;
  }
  g.count = static_cast<int>(rounds.size());
  if (rounds.empty()) return g;
  double total = 0.0;
  for (int v : rounds) total += v;
  g.mean_rounds = total / static_cast<double>(rounds.size());
  g.quantiles = Quantiles(std::span<const int>(rounds));
  return g;
}

json GroupToJson(const GroupStats& g) {
  return json{{"count", g.count},
              {"censored", g.censored},
              {"mean_rounds", g.mean_rounds},
              {"quantiles", g.quantiles}};
}

GroupStats GroupFromJson(const json& j) {
  GroupStats g;
  g.count = j.at("count").get<int>();
  g.censored = j.at("censored").get<int>();
  g.mean_rounds = j.at("mean_rounds").get<double>();
  g.quantiles = j.at("quantiles").get<std::vector<double>>();
  return g;
}

json SummaryToJson(const SeedSummary& s) {
  return json{{"seed", s.seed},
              {"auroc", s.auroc},
              {"fpr95", s.fpr95},
              {"msp_auroc", s.msp_auroc},
              {"msp_fpr95", s.msp_fpr95},
              {"id", GroupToJson(s.id)},
              {"ood", GroupToJson(s.ood)}};
}

SeedSummary SummaryFromJson(const json& j) {
  SeedSummary s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.auroc = j.at("auroc").get<double>();
  s.fpr95 = j.at("fpr95").get<double>();
  s.msp_auroc = j.at("msp_auroc").get<double>();
  s.msp_fpr95 = j.at("msp_fpr95").get<double>();
  s.id = GroupFromJson(j.at("id"));
  s.ood = GroupFromJson(j.at("ood"));
  return s;
}

json MeanStdToJson(const MeanStd& m) {
  return json{{"mean", m.mean}, {"std", m.std}};
}

MeanStd MeanStdFromJson(const json& j) {
  return MeanStd{j.at("mean").get<double>(), j.at("std").get<double>()};
}

json AggregateToJson(const ReportAggregate& a) {
  return json{{"auroc", MeanStdToJson(a.auroc)},
              {"fpr95", MeanStdToJson(a.fpr95)},
              {"msp_auroc", MeanStdToJson(a.msp_auroc)},
              {"msp_fpr95", MeanStdToJson(a.msp_fpr95)},
              {"id_mean_rounds", MeanStdToJson(a.id_mean_rounds)},
              {"ood_mean_rounds", MeanStdToJson(a.ood_mean_rounds)}};
}

ReportAggregate AggregateFromJson(const json& j) {
  ReportAggregate a;
  a.auroc = MeanStdFromJson(j.at("auroc"));
  a.fpr95 = MeanStdFromJson(j.at("fpr95"));
  a.msp_auroc = MeanStdFromJson(j.at("msp_auroc"));
  a.msp_fpr95 = MeanStdFromJson(j.at("msp_fpr95"));
  a.id_mean_rounds = MeanStdFromJson(j.at("id_mean_rounds"));
  a.ood_mean_rounds = MeanStdFromJson(j.at("ood_mean_rounds"));
  return a;
}

json RecordToJson(const TargetRecord& r) {
  return json{{"seed", r.seed},
              {"target_id", r.target_id},
              {"ood", r.ood},
              {"split_index", r.split_index},
              {"predicted_class", r.predicted_class},
              {"reported_class", r.reported_class},
              {"score", r.score},
              {"censored", r.censored},
              {"rounds", r.rounds},
              {"final_target_score", r.final_target_score},
              {"final_source_accuracy", r.final_source_accuracy},
              {"msp", r.msp},
              {"final_checksum", r.final_checksum}};
}

TransportOptions MakeTransportOptions(const ExperimentConfig& config) {
  TransportOptions options;
  const auto ms = std::chrono::milliseconds(
      static_cast<std::int64_t>(config.transport_timeout_s * 1000.0));
  options.receive_timeout = ms;
  options.connect_timeout = ms;
  return options;
}

std::optional<int> ReportedClass(const ExperimentConfig& config,
                                 const SeedContext& context,
                                 const PoolEntry& entry, int predicted) {
  if (config.mode != RunMode::kCcDison) return std::nullopt;
  Rng rng(DeriveSeed(context.seed, static_cast<std::uint64_t>(entry.target_id),
                     StreamTag::kClassAssignment));
  return AssignClass(predicted, context.spec.num_classes, config.misclass,
                     entry.ood, rng);
}

const Sample& TargetSample(const SeedContext& context, const PoolEntry& entry) {
  const Dataset& split = entry.ood ? context.ood_test : context.id_test;
  return split[static_cast<std::size_t>(entry.split_index)];
}

TargetRecord BaseRecord(const SeedContext& context, const PoolEntry& entry) {
  const Sample& sample = TargetSample(context, entry);
  TargetRecord rec;
  rec.seed = context.seed;
  rec.target_id = entry.target_id;
  rec.ood = entry.ood;
  rec.split_index = entry.split_index;
  rec.predicted_class = PredictClass(context.spec, context.pretrained, sample.pixels);
  rec.msp = MspScore(context.spec, context.pretrained, sample.pixels);
  return rec;
}

void FillFromRounds(TargetRecord& rec, std::span<const RoundRecord> rounds) {
  rec.rounds = static_cast<int>(rounds.size());
  if (rounds.empty()) return;
  rec.final_target_score = rounds.back().target_score;
  rec.final_source_accuracy = rounds.back().source_accuracy.value_or(-1.0);
}

// Runs fn(i) for i in [0, n) on `workers` threads. Results must be written
// by index; the first failing index is rethrown.
template <typename Fn>
void ParallelFor(int n, int workers, Fn fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> threads;
  const int count = std::min(workers, n);
  for (int w = 0; w < count; ++w) {
    threads.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string ReadText(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::string> SplitCsvLine(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

constexpr const char* kCsvHeader =
    "seed,target_id,ood,split_index,predicted_class,reported_class,score,"
    "censored,rounds,final_target_score,final_source_accuracy,msp,"
    "final_checksum";

}  // namespace

std::string_view RunModeName(RunMode mode) { return NameOf(mode, kRunModes); }
RunMode ParseRunMode(std::string_view name) {
  return ParseName(name, kRunModes, "mode");
}
std::string_view TransportModeName(TransportMode mode) {
  return NameOf(mode, kTransports);
}
TransportMode ParseTransportMode(std::string_view name) {
  return ParseName(name, kTransports, "transport");
}
std::string_view NodeRoleName(NodeRole role) { return NameOf(role, kRoles); }
NodeRole ParseNodeRole(std::string_view name) {
  return ParseName(name, kRoles, "role");
}
std::string_view SweepKindName(SweepKind kind) { return NameOf(kind, kSweepKinds); }
SweepKind ParseSweepKind(std::string_view name) {
  return ParseName(name, kSweepKinds, "sweep kind");
}

void ExperimentConfig::Validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1]");
  }
  if (local_steps < 0) throw std::invalid_argument("local_steps must be >= 0");
  isolation.Validate();
  if (misclass != MisclassMode::kNone && mode != RunMode::kCcDison) {
    throw std::invalid_argument("--misclass requires mode cc_dison");
  }
  if (n_id < 1) throw std::invalid_argument("n_id must be >= 1: AUROC is undefined without ID targets");
  if (n_ood < 1) throw std::invalid_argument("n_ood must be >= 1: AUROC is undefined without OOD targets");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (!(transport_timeout_s > 0.0)) {
    throw std::invalid_argument("transport timeout must be positive");
  }
  if (dataset_dir.empty()) data.Validate();
  if (transport == TransportMode::kTcp) {
    if (mode == RunMode::kCentralized) {
      throw std::invalid_argument("centralized mode has no transport");
    }
    if (!role) throw std::invalid_argument("tcp transport requires --role");
    if (addr.empty()) throw std::invalid_argument("tcp transport requires --addr");
    if (local_steps == 0) {
      throw std::invalid_argument(
          "tcp transport requires an explicit --local-steps shared by both roles");
    }
  } else if (role) {
    throw std::invalid_argument("--role only applies to tcp transport");
  }
}

int ExperimentConfig::ResolveLocalSteps(std::size_t source_size) const {
  if (local_steps > 0) return local_steps;
  const double steps = std::round(static_cast<double>(source_size) /
                                  static_cast<double>(isolation.batch_size));
  return std::max(1, static_cast<int>(steps));
}

DisonOptions ExperimentConfig::MakeDisonOptions(std::size_t source_size) const {
  DisonOptions options;
  options.plan.local_steps = ResolveLocalSteps(source_size);
  options.plan.weights = AggregationWeights(alpha);
  options.plan.class_conditional = mode == RunMode::kCcDison;
  options.plan.misclass = misclass;
  options.isolation = isolation;
  options.Validate();
  return options;
}

json ExperimentConfig::ToJson() const {
  json j;
  j["mode"] = RunModeName(mode);
  j["transport"] = TransportModeName(transport);
  j["role"] = role ? json(NodeRoleName(*role)) : json(nullptr);
  j["addr"] = addr;
  j["transport_timeout_s"] = transport_timeout_s;
  j["alpha"] = alpha;
  j["local_steps"] = local_steps;
  j["misclass"] = MisclassModeName(misclass);
  j["optimizer"] = OptimizerToJson(isolation.optimizer);
  j["batch_size"] = isolation.batch_size;
  j["replicas"] = isolation.replicas;
  j["augment"] = AugmentLabel(isolation.augment);
  j["augment_flip_probability"] = isolation.augment.flip_probability;
  j["augment_max_shift"] = isolation.augment.max_shift;
  j["augment_noise_sigma"] = isolation.augment.noise_sigma;
  j["e_stab"] = isolation.convergence.stability_window;
  j["tau"] = isolation.convergence.tau;
  j["r_max"] = isolation.convergence.max_rounds;
  j["source_eval_subsample"] =
      isolation.convergence.source_eval_subsample
          ? json(*isolation.convergence.source_eval_subsample)
          : json(nullptr);
  j["data"] = DataToJson(data);
  j["preset"] = preset;
  j["instance_norm"] = use_instance_norm;
  j["pretrain"] = json{{"epochs", pretrain.epochs},
                       {"batch_size", pretrain.batch_size},
                       {"optimizer", OptimizerToJson(pretrain.optimizer)}};
  j["dataset_dir"] = dataset_dir;
  j["checkpoint"] = checkpoint;
  j["n_id"] = n_id;
  j["n_ood"] = n_ood;
  j["seeds"] = seeds;
  j["workers"] = workers;
  j["out"] = out;
  return j;
}

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  CheckKeys(j,
            {"mode", "transport", "role", "addr", "transport_timeout_s", "alpha",
             "local_steps", "misclass", "optimizer", "batch_size", "replicas",
             "augment", "augment_flip_probability", "augment_max_shift",
             "augment_noise_sigma", "e_stab", "tau", "r_max",
             "source_eval_subsample", "data", "preset", "instance_norm",
             "pretrain", "dataset_dir", "checkpoint", "n_id", "n_ood", "seeds",
             "workers", "out"},
            "config");
  ExperimentConfig c;
  if (j.contains("mode")) c.mode = ParseRunMode(j["mode"].get<std::string>());
  if (j.contains("transport")) {
    c.transport = ParseTransportMode(j["transport"].get<std::string>());
  }
  if (j.contains("role") && !j["role"].is_null()) {
    c.role = ParseNodeRole(j["role"].get<std::string>());
  }
  Read(j, "addr", c.addr);
  Read(j, "transport_timeout_s", c.transport_timeout_s);
  Read(j, "alpha", c.alpha);
  Read(j, "local_steps", c.local_steps);
  if (j.contains("misclass")) {
    c.misclass = ParseMisclassMode(j["misclass"].get<std::string>());
  }
  if (j.contains("optimizer")) {
    c.isolation.optimizer =
        OptimizerFromJson(j["optimizer"], c.isolation.optimizer, "optimizer");
  }
  Read(j, "batch_size", c.isolation.batch_size);
  Read(j, "replicas", c.isolation.replicas);
  if (j.contains("augment")) SetAugment(c.isolation.augment, j["augment"].get<std::string>());
  Read(j, "augment_flip_probability", c.isolation.augment.flip_probability);
  Read(j, "augment_max_shift", c.isolation.augment.max_shift);
  Read(j, "augment_noise_sigma", c.isolation.augment.noise_sigma);
  Read(j, "e_stab", c.isolation.convergence.stability_window);
  Read(j, "tau", c.isolation.convergence.tau);
  Read(j, "r_max", c.isolation.convergence.max_rounds);
  if (j.contains("source_eval_subsample") && !j["source_eval_subsample"].is_null()) {
    c.isolation.convergence.source_eval_subsample =
        j["source_eval_subsample"].get<int>();
  }
  if (j.contains("data")) c.data = DataFromJson(j["data"], c.data);
  Read(j, "preset", c.preset);
  Read(j, "instance_norm", c.use_instance_norm);
  if (j.contains("pretrain")) {
    const json& p = j["pretrain"];
    CheckKeys(p, {"epochs", "batch_size", "optimizer"}, "pretrain");
    Read(p, "epochs", c.pretrain.epochs);
    Read(p, "batch_size", c.pretrain.batch_size);
    if (p.contains("optimizer")) {
      c.pretrain.optimizer =
          OptimizerFromJson(p["optimizer"], c.pretrain.optimizer, "pretrain.optimizer");
    }
  }
  Read(j, "dataset_dir", c.dataset_dir);
  Read(j, "checkpoint", c.checkpoint);
  Read(j, "n_id", c.n_id);
  Read(j, "n_ood", c.n_ood);
  Read(j, "seeds", c.seeds);
  Read(j, "workers", c.workers);
  Read(j, "out", c.out);
  return c;
}

SeedContext PrepareSeed(const ExperimentConfig& config, std::uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;
  if (!config.dataset_dir.empty()) {
    const std::filesystem::path dir(config.dataset_dir);
    ctx.train = LoadDataset(dir / "train.isds");
    ctx.id_test = LoadDataset(dir / "id_test.isds");
    ctx.ood_test = LoadDataset(dir / "ood_test.isds");
  } else {
    SyntheticConfig data = config.data;
    data.seed = seed;
    SyntheticSplits splits = Generate(data);
    ctx.train = std::move(splits.train);
    ctx.id_test = std::move(splits.id_test);
    ctx.ood_test = std::move(splits.ood_test);
  }
  if (config.n_id > static_cast<int>(ctx.id_test.size()) ||
      config.n_ood > static_cast<int>(ctx.ood_test.size())) {
    throw std::invalid_argument(
        "target pool larger than the test splits (" +
        std::to_string(ctx.id_test.size()) + " ID, " +
        std::to_string(ctx.ood_test.size()) + " OOD available)");
  }

  if (!config.checkpoint.empty()) {
    Checkpoint ck = LoadCheckpoint(config.checkpoint);
    if (ck.spec.input_dim != ctx.train.input_dim() ||
        ck.spec.num_classes != ctx.train.num_classes) {
      throw std::invalid_argument("checkpoint does not match the dataset geometry");
    }
    ctx.spec = ck.spec;
    ctx.pretrained = std::move(ck.params);
    ctx.pretrain_accuracy = EvaluateAccuracy(ctx.spec, ctx.pretrained, ctx.train);
  } else {
    PretrainConfig pc = config.pretrain;
    pc.spec = NetworkSpec::FromPreset(config.preset, ctx.train.input_dim(),
                                      ctx.train.num_classes);
    pc.spec.use_instance_norm = config.use_instance_norm;
    pc.spec.seed = seed;
    pc.seed = seed;
    PretrainResult pre = Pretrain(pc, ctx.train);
    ctx.spec = pc.spec;
    ctx.pretrained = std::move(pre.params);
    ctx.pretrain_accuracy = pre.log.back().accuracy;
  }
  return ctx;
}

std::vector<PoolEntry> TargetPool(const ExperimentConfig& config,
                                  std::uint64_t seed) {
  std::vector<PoolEntry> pool;
  for (int i = 0; i < config.n_id; ++i) pool.push_back({0, false, i});
  for (int i = 0; i < config.n_ood; ++i) pool.push_back({0, true, i});
  Rng rng(DeriveSeed(seed, 0, StreamTag::kTargetPool));
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].target_id = static_cast<int>(i);
  return pool;
}

IsolationSeeds TargetSeeds(std::uint64_t seed, int target_id) {
  return IsolationSeeds::Derive(seed, static_cast<std::uint64_t>(target_id));
}

TargetRecord ScoreTarget(const ExperimentConfig& config,
                         const SeedContext& context, const PoolEntry& entry) {
  TargetRecord rec = BaseRecord(context, entry);
  const Sample& sample = TargetSample(context, entry);
  const IsolationSeeds seeds = TargetSeeds(context.seed, entry.target_id);
  if (config.mode == RunMode::kCentralized) {
    IsolationResult result = RunCentralized(context.spec, context.pretrained,
                                            context.train, sample.pixels,
                                            config.isolation, seeds);
    rec.score = result.score;
    rec.censored = result.censored;
    FillFromRounds(rec, result.trajectory);
    rec.final_checksum = result.final_params.Checksum();
    return rec;
  }
  const DisonOptions options = config.MakeDisonOptions(context.train.size());
  DisonRunOptions run;
  run.transport_options = MakeTransportOptions(config);
  run.reported_class = ReportedClass(config, context, entry, rec.predicted_class);
  DisonResult result = RunDison(context.spec, context.pretrained, context.train,
                                sample.pixels, options, seeds, run);
  rec.reported_class = result.reported_class.value_or(-1);
  rec.score = result.score;
  rec.censored = result.censored;
  FillFromRounds(rec, result.rounds);
  rec.final_checksum = result.final_checksum;
  return rec;
}

MeanStd ComputeMeanStd(std::span<const double> values) {
  MeanStd m;
  if (values.empty()) return m;
  double total = 0.0;
  for (double v : values) total += v;
  m.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

SeedSummary Summarize(std::uint64_t seed, std::span<const TargetRecord> records) {
  SeedSummary s;
  s.seed = seed;
  ScoreSet rounds, msp;
  for (const TargetRecord& r : records) {
    if (r.seed != seed) continue;
    (r.ood ? rounds.ood_scores : rounds.id_scores).push_back(r.score);
    (r.ood ? msp.ood_scores : msp.id_scores).push_back(r.msp);
  }
  if (rounds.id_scores.empty() || rounds.ood_scores.empty()) {
    throw std::invalid_argument("seed " + std::to_string(seed) +
                                " needs both ID and OOD targets");
  }
  s.auroc = Auroc(rounds);
  s.fpr95 = FprAtTpr(rounds);
  s.msp_auroc = Auroc(msp);
  s.msp_fpr95 = FprAtTpr(msp);
  std::vector<TargetRecord> mine;
  for (const TargetRecord& r : records) {
    if (r.seed == seed) mine.push_back(r);
  }
  s.id = Group(mine, false);
  s.ood = Group(mine, true);
  return s;
}

ReportAggregate AggregateSummaries(std::span<const SeedSummary> summaries) {
  auto collect = [&](auto field) {
    std::vector<double> v;
    for (const SeedSummary& s : summaries) v.push_back(field(s));
    return ComputeMeanStd(v);
  };
  ReportAggregate a;
  a.auroc = collect([](const SeedSummary& s) { return s.auroc; });
  a.fpr95 = collect([](const SeedSummary& s) { return s.fpr95; });
  a.msp_auroc = collect([](const SeedSummary& s) { return s.msp_auroc; });
  a.msp_fpr95 = collect([](const SeedSummary& s) { return s.msp_fpr95; });
  a.id_mean_rounds = collect([](const SeedSummary& s) { return s.id.mean_rounds; });
  a.ood_mean_rounds = collect([](const SeedSummary& s) { return s.ood.mean_rounds; });
  return a;
}

void Finalize(ExperimentReport& report) {
  report.seeds.clear();
  for (std::uint64_t seed : report.config.seeds) {
    report.seeds.push_back(Summarize(seed, report.targets));
  }
  report.aggregate = AggregateSummaries(report.seeds);
}

json ExperimentReport::ToJson() const {
  json j;
  j["config"] = config.ToJson();
  j["pretrain_accuracy"] = pretrain_accuracy;
  j["local_steps"] = local_steps;
  json per_seed = json::array();
  for (const SeedSummary& s : seeds) per_seed.push_back(SummaryToJson(s));
  j["seeds"] = per_seed;
  j["aggregate"] = AggregateToJson(aggregate);
  json records = json::array();
  for (const TargetRecord& r : targets) records.push_back(RecordToJson(r));
  j["targets"] = records;
  return j;
}

ExperimentReport RunExperiment(const ExperimentConfig& config) {
  config.Validate();
  std::vector<SeedContext> contexts;
  for (std::uint64_t seed : config.seeds) contexts.push_back(PrepareSeed(config, seed));
  return RunExperiment(config, contexts);
}

ExperimentReport RunExperiment(const ExperimentConfig& config,
                               std::span<const SeedContext> contexts) {
  config.Validate();
  if (config.transport != TransportMode::kInProcess) {
    throw std::invalid_argument(
        "tcp runs go through RunSourceService / RunTargetClient");
  }
  if (contexts.size() != config.seeds.size()) {
    throw std::invalid_argument("one prepared context per seed is required");
  }
  ExperimentReport report;
  report.config = config;
  for (std::size_t s = 0; s < contexts.size(); ++s) {
    const SeedContext& ctx = contexts[s];
    if (ctx.seed != config.seeds[s]) {
      throw std::invalid_argument("prepared contexts out of seed order");
    }
    report.pretrain_accuracy.push_back(ctx.pretrain_accuracy);
    report.local_steps.push_back(config.mode == RunMode::kCentralized
                                     ? 1
                                     : config.ResolveLocalSteps(ctx.train.size()));
    const std::vector<PoolEntry> pool = TargetPool(config, ctx.seed);
    std::vector<TargetRecord> records(pool.size());
    ParallelFor(static_cast<int>(pool.size()), config.workers, [&](int i) {
      records[static_cast<std::size_t>(i)] =
          ScoreTarget(config, ctx, pool[static_cast<std::size_t>(i)]);
    });
    report.targets.insert(report.targets.end(), records.begin(), records.end());
  }
  Finalize(report);
  return report;
}

std::vector<SourceServiceLog> RunSourceService(const ExperimentConfig& config) {
  config.Validate();
  if (config.transport != TransportMode::kTcp || config.role != NodeRole::kSource) {
    throw std::invalid_argument("source service requires tcp transport and role source");
  }
  const TransportOptions options = MakeTransportOptions(config);
  TcpListener listener = TcpListener::Bind(config.addr);
  std::unique_ptr<Endpoint> endpoint = listener.Accept(options);
  std::vector<SourceServiceLog> logs;
  const int pool_size = config.n_id + config.n_ood;
  for (std::uint64_t seed : config.seeds) {
    const SeedContext ctx = PrepareSeed(config, seed);
    const DisonOptions dison = config.MakeDisonOptions(ctx.train.size());
    SourceServiceLog log;
    log.seed = seed;
    for (int id = 0; id < pool_size; ++id) {
      SourceNode node(ctx.spec, ctx.pretrained, ctx.train, dison,
                      TargetSeeds(seed, id));
      log.rounds.push_back(node.Run(*endpoint).final_round);
    }
    logs.push_back(std::move(log));
  }
  endpoint->Close();
  return logs;
}

ExperimentReport RunTargetClient(const ExperimentConfig& config) {
  config.Validate();
  if (config.transport != TransportMode::kTcp || config.role != NodeRole::kTarget) {
    throw std::invalid_argument("target client requires tcp transport and role target");
  }
  const TransportOptions options = MakeTransportOptions(config);
  std::unique_ptr<Endpoint> endpoint = TcpDial(config.addr, options);
  ExperimentReport report;
  report.config = config;
  for (std::uint64_t seed : config.seeds) {
    const SeedContext ctx = PrepareSeed(config, seed);
    const DisonOptions dison = config.MakeDisonOptions(ctx.train.size());
    report.pretrain_accuracy.push_back(ctx.pretrain_accuracy);
    report.local_steps.push_back(dison.plan.local_steps);
    for (const PoolEntry& entry : TargetPool(config, seed)) {
      TargetRecord rec = BaseRecord(ctx, entry);
      TargetNode node(ctx.spec, ctx.pretrained, TargetSample(ctx, entry).pixels,
                      ctx.train.patch_size, dison, TargetSeeds(seed, entry.target_id),
                      ReportedClass(config, ctx, entry, rec.predicted_class));
      TargetSessionLog log = node.Run(*endpoint);
      rec.reported_class = log.reported_class.value_or(-1);
      rec.score = log.score;
      rec.censored = log.censored;
      FillFromRounds(rec, log.rounds);
      rec.final_checksum = log.final_params.Checksum();
      report.targets.push_back(rec);
    }
  }
  endpoint->Close();
  Finalize(report);
  return report;
}

std::string TargetsCsv(std::span<const TargetRecord> records) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const TargetRecord& r : records) {
    os << r.seed << ',' << r.target_id << ',' << (r.ood ? 1 : 0) << ','
       << r.split_index << ',' << r.predicted_class << ',' << r.reported_class
       << ',' << r.score << ',' << (r.censored ? 1 : 0) << ',' << r.rounds << ','
       << FormatFloat(r.final_target_score) << ','
       << FormatDouble(r.final_source_accuracy) << ',' << FormatDouble(r.msp)
       << ',' << r.final_checksum << '\n';
  }
  return os.str();
}

std::vector<TargetRecord> ParseTargetsCsv(std::string_view csv) {
  std::vector<TargetRecord> records;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::invalid_argument("targets CSV has an unexpected header");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = SplitCsvLine(line);
    if (f.size() != 13) {
      throw std::invalid_argument("targets CSV line " + std::to_string(line_no) +
                                  " has " + std::to_string(f.size()) + " fields");
    }
    TargetRecord r;
    try {
      r.seed = std::stoull(f[0]);
      r.target_id = std::stoi(f[1]);
      r.ood = std::stoi(f[2]) != 0;
      r.split_index = std::stoi(f[3]);
      r.predicted_class = std::stoi(f[4]);
      r.reported_class = std::stoi(f[5]);
      r.score = std::stoi(f[6]);
      r.censored = std::stoi(f[7]) != 0;
      r.rounds = std::stoi(f[8]);
      r.final_target_score = std::stof(f[9]);
      r.final_source_accuracy = std::stod(f[10]);
      r.msp = std::stod(f[11]);
      r.final_checksum = static_cast<std::uint32_t>(std::stoul(f[12]));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("targets CSV line " + std::to_string(line_no) +
                                  " is malformed");
    }
    records.push_back(r);
  }
  return records;
}

void WriteReport(const std::filesystem::path& dir, const ExperimentReport& report) {
  std::filesystem::create_directories(dir);
  WriteText(dir / "report.json", report.ToJson().dump(2) + "\n");
  WriteText(dir / "targets.csv", TargetsCsv(report.targets));
}

VerifyResult VerifyReport(const std::filesystem::path& dir) {
  VerifyResult result;
  auto fail = [&](std::string what) {
    result.ok = false;
    result.mismatches.push_back(std::move(what));
  };
  const json j = json::parse(ReadText(dir / "report.json"));
  const std::vector<TargetRecord> records =
      ParseTargetsCsv(ReadText(dir / "targets.csv"));

  const json& listed = j.at("targets");
  if (listed.size() != records.size()) {
    fail("report lists " + std::to_string(listed.size()) + " targets, CSV has " +
         std::to_string(records.size()));
  } else {
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (RecordToJson(records[i]) != listed[i]) {
        fail("target row " + std::to_string(i) + " differs between CSV and JSON");
      }
    }
  }

  std::vector<SeedSummary> recomputed;
  for (const json& s : j.at("seeds")) {
    const SeedSummary stored = SummaryFromJson(s);
    SeedSummary fresh;
    try {
      fresh = Summarize(stored.seed, records);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
      continue;
    }
    const std::string tag = "seed " + std::to_string(stored.seed) + ": ";
    if (fresh.auroc != stored.auroc) fail(tag + "auroc");
    if (fresh.fpr95 != stored.fpr95) fail(tag + "fpr95");
    if (fresh.msp_auroc != stored.msp_auroc) fail(tag + "msp_auroc");
    if (fresh.msp_fpr95 != stored.msp_fpr95) fail(tag + "msp_fpr95");
    if (fresh.id != stored.id) fail(tag + "id rounds");
    if (fresh.ood != stored.ood) fail(tag + "ood rounds");
    recomputed.push_back(fresh);
  }
  if (AggregateSummaries(recomputed) != AggregateFromJson(j.at("aggregate"))) {
    fail("aggregate mean/std");
  }
  return result;
}

std::vector<SweepPoint> SweepPoints(const ExperimentConfig& base, SweepKind kind,
                                    std::span<const std::string> values) {
  std::vector<std::string> grid(values.begin(), values.end());
  if (grid.empty()) {
    switch (kind) {
      case SweepKind::kAlpha:
        grid = {"0.4", "0.5", "0.8", "0.95"};
        break;
      case SweepKind::kAugment:
        grid = {"both", "source_only", "target_only", "none"};
        break;
      case SweepKind::kWidth:
        grid = {"slim", "base", "deep"};
        break;
    }
  }
  std::vector<SweepPoint> points;
  for (const std::string& v : grid) {
    SweepPoint p{v, base};
    switch (kind) {
      case SweepKind::kAlpha:
        p.config.alpha = std::stod(v);
        p.label = "alpha=" + v;
        break;
      case SweepKind::kAugment:
        SetAugment(p.config.isolation.augment, v);
        break;
      case SweepKind::kWidth:
        if (!base.checkpoint.empty()) {
          throw std::invalid_argument("a width sweep re-trains; drop --checkpoint");
        }
        NetworkSpec::FromPreset(v, 1, 2);  // validates the name
        p.config.preset = v;
        break;
    }
    p.config.Validate();
    points.push_back(std::move(p));
  }
  return points;
}

SweepResult RunSweep(const ExperimentConfig& base, SweepKind kind,
                     std::span<const std::string> values) {
  SweepResult result;
  result.kind = kind;
  std::map<std::string, std::vector<SeedContext>> prepared;  // by preset
  for (const SweepPoint& point : SweepPoints(base, kind, values)) {
    auto it = prepared.find(point.config.preset);
    if (it == prepared.end()) {
      std::vector<SeedContext> contexts;
      for (std::uint64_t seed : point.config.seeds) {
        contexts.push_back(PrepareSeed(point.config, seed));
      }
      it = prepared.emplace(point.config.preset, std::move(contexts)).first;
    }
    result.labels.push_back(point.label);
    result.reports.push_back(RunExperiment(point.config, it->second));
  }
  return result;
}

std::string SweepResult::TidyCsv() const {
  std::ostringstream os;
  os << "sweep,point,seed,auroc,fpr95,msp_auroc,msp_fpr95,id_mean_rounds,"
        "ood_mean_rounds,id_median_rounds,ood_median_rounds,id_censored,"
        "ood_censored\n";
  for (std::size_t p = 0; p < reports.size(); ++p) {
    for (const SeedSummary& s : reports[p].seeds) {
      os << SweepKindName(kind) << ',' << labels[p] << ',' << s.seed << ','
         << FormatDouble(s.auroc) << ',' << FormatDouble(s.fpr95) << ','
         << FormatDouble(s.msp_auroc) << ',' << FormatDouble(s.msp_fpr95) << ','
         << FormatDouble(s.id.mean_rounds) << ','
         << FormatDouble(s.ood.mean_rounds) << ','
         << FormatDouble(s.id.quantiles.at(1)) << ','
         << FormatDouble(s.ood.quantiles.at(1)) << ',' << s.id.censored << ','
         << s.ood.censored << '\n';
    }
  }
  return os.str();
}

json SweepResult::ToJson() const {
  json points = json::array();
  for (std::size_t p = 0; p < reports.size(); ++p) {
    points.push_back(json{{"point", labels[p]},
                          {"aggregate", AggregateToJson(reports[p].aggregate)},
                          {"seeds", [&] {
                             json s = json::array();
                             for (const SeedSummary& x : reports[p].seeds) {
                               s.push_back(SummaryToJson(x));
                             }
                             return s;
                           }()}});
  }
  return json{{"sweep", SweepKindName(kind)}, {"points", points}};
}

void WriteSweep(const std::filesystem::path& dir, const SweepResult& result) {
  std::filesystem::create_directories(dir);
  WriteText(dir / "sweep.csv", result.TidyCsv());
  WriteText(dir / "sweep.json", result.ToJson().dump(2) + "\n");
  for (std::size_t p = 0; p < result.reports.size(); ++p) {
    std::string name = result.labels[p];
    std::replace(name.begin(), name.end(), '=', '_');
    WriteReport(dir / name, result.reports[p]);
  }
}

}  // namespace isonet
