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

// isonet: dataset generation, pre-training, isolation runs, sweeps and
// report verification.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "isonet/checkpoint.h"
#include "isonet/data.h"
#include "isonet/experiment.h"
#include "isonet/pretrain.h"
#include "json.hpp"

namespace {

using namespace isonet;

// Command-line overrides layered on top of the JSON config.
struct Overrides {
  std::string config_path;
  std::optional<std::string> mode, transport, role, addr, augment, misclass;
  std::optional<std::string> preset, data_dir, checkpoint, out, optimizer;
  std::optional<double> alpha, tau, timeout, lr;
  std::optional<int> local_steps, e_stab, r_max, n_id, n_ood, workers;
  std::optional<int> batch_size, replicas, subsample;
  std::vector<std::uint64_t> seeds;

  void Register(CLI::App* app) {
    app->add_option("--config", config_path, "JSON experiment config")
        ->check(CLI::ExistingFile);
    app->add_option("--mode", mode, "centralized | dison | cc_dison");
    app->add_option("--transport", transport, "inproc | tcp");
    app->add_option("--role", role, "source | target (tcp)");
    app->add_option("--addr", addr, "host:port (tcp)");
    app->add_option("--timeout", timeout, "receive/connect timeout in seconds");
    app->add_option("--alpha", alpha, "aggregation weight of the source model");
    app->add_option("--local-steps", local_steps, "E; 0 picks |D_s| / batch");
    app->add_option("--e-stab", e_stab, "stability window");
    app->add_option("--tau", tau, "required source accuracy");
    app->add_option("--r-max", r_max, "round cap");
    app->add_option("--source-eval-subsample", subsample,
                    "evaluate the source criterion on this many samples");
    app->add_option("--augment", augment, "both | source_only | target_only | none");
    app->add_option("--misclass", misclass, "none | all_wrong | id_wrong | ood_wrong");
    app->add_option("--optimizer", optimizer, "sgd | sgd_momentum | adam");
    app->add_option("--lr", lr, "isolation learning rate");
    app->add_option("--batch-size", batch_size, "source mini-batch size");
    app->add_option("--replicas", replicas, "target replicas N (centralized)");
    app->add_option("--preset", preset, "slim | base | deep");
    app->add_option("--data", data_dir, "directory written by 'generate'");
    app->add_option("--checkpoint", checkpoint, "checkpoint written by 'pretrain'");
    app->add_option("--n-id", n_id, "ID targets per seed");
    app->add_option("--n-ood", n_ood, "OOD targets per seed");
    app->add_option("--seeds", seeds, "run seeds")->delimiter(',');
    app->add_option("--workers", workers, "parallel target workers");
    app->add_option("--out", out, "report directory");
  }

  ExperimentConfig Build() const {
    ExperimentConfig c;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      c = ExperimentConfig::FromJson(nlohmann::json::parse(in));
    }
    if (mode) c.mode = ParseRunMode(*mode);
    if (transport) c.transport = ParseTransportMode(*transport);
    if (role) c.role = ParseNodeRole(*role);
    if (addr) c.addr = *addr;
    if (timeout) c.transport_timeout_s = *timeout;
    if (alpha) c.alpha = *alpha;
    if (local_steps) c.local_steps = *local_steps;
    if (e_stab) c.isolation.convergence.stability_window = *e_stab;
    if (tau) c.isolation.convergence.tau = *tau;
    if (r_max) c.isolation.convergence.max_rounds = *r_max;
    if (subsample) c.isolation.convergence.source_eval_subsample = *subsample;
    if (augment) {
      c.isolation.augment.apply_on = ParseAugmentSide(*augment);
      c.isolation.augment.enabled = c.isolation.augment.apply_on != AugmentSide::kNone;
    }
    if (misclass) c.misclass = ParseMisclassMode(*misclass);
    if (optimizer) c.isolation.optimizer.kind = ParseOptimizerKind(*optimizer);
    if (lr) c.isolation.optimizer.learning_rate = static_cast<float>(*lr);
    if (batch_size) c.isolation.batch_size = *batch_size;
    if (replicas) c.isolation.replicas = *replicas;
    if (preset) c.preset = *preset;
    if (data_dir) c.dataset_dir = *data_dir;
    if (checkpoint) c.checkpoint = *checkpoint;
    if (n_id) c.n_id = *n_id;
    if (n_ood) c.n_ood = *n_ood;
    if (!seeds.empty()) c.seeds = seeds;
    if (workers) c.workers = *workers;
    if (out) c.out = *out;
    c.Validate();
    return c;
  }
};

std::string Fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void PrintReport(const ExperimentReport& report) {
  for (const SeedSummary& s : report.seeds) {
    std::cout << "seed " << s.seed << ": AUROC " << Fixed(s.auroc) << "  FPR95 "
              << Fixed(s.fpr95) << "  MSP AUROC " << Fixed(s.msp_auroc)
              << "  rounds ID median " << Fixed(s.id.quantiles.at(1), 1)
              << " (" << s.id.censored << "/" << s.id.count << " censored)"
              << "  OOD median " << Fixed(s.ood.quantiles.at(1), 1) << " ("
              << s.ood.censored << "/" << s.ood.count << " censored)\n";
  }
  const ReportAggregate& a = report.aggregate;
  std::cout << RunModeName(report.config.mode) << " misclass="
            << MisclassModeName(report.config.misclass) << "  AUROC "
            << Fixed(a.auroc.mean) << " ± " << Fixed(a.auroc.std) << "  FPR95 "
            << Fixed(a.fpr95.mean) << " ± " << Fixed(a.fpr95.std)
            << "  MSP AUROC " << Fixed(a.msp_auroc.mean) << " ± "
            << Fixed(a.msp_auroc.std) << "\n";
}

int Generate(const std::string& out, std::uint64_t seed, const std::string& config_path,
             std::optional<std::string> artifact, std::optional<std::string> ood_kind,
             std::optional<int> train_per_class) {
  ExperimentConfig c;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    c = ExperimentConfig::FromJson(nlohmann::json::parse(in));
  }
  SyntheticConfig data = c.data;
  data.seed = seed;
  if (artifact) data.artifact = ParseArtifactKind(*artifact);
  if (ood_kind) data.ood = ParseOodKind(*ood_kind);
  if (train_per_class) data.train_per_class = *train_per_class;
  const SyntheticSplits splits = Generate(data);
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  SaveDataset(dir / "train.isds", splits.train);
  SaveDataset(dir / "id_test.isds", splits.id_test);
  SaveDataset(dir / "ood_test.isds", splits.ood_test);
  std::cout << "train " << splits.train.size() << "  id_test "
            << splits.id_test.size() << "  ood_test " << splits.ood_test.size()
            << "  -> " << dir.string() << "\n";
  return 0;
}

int PretrainCommand(const std::string& data_dir, const std::string& out,
                    const std::string& preset, int epochs, double lr,
                    std::uint64_t seed) {
  const Dataset train = LoadDataset(std::filesystem::path(data_dir) / "train.isds");
  PretrainConfig pc;
  pc.spec = NetworkSpec::FromPreset(preset, train.input_dim(), train.num_classes);
  pc.spec.seed = seed;
  pc.seed = seed;
  pc.epochs = epochs;
  pc.optimizer.learning_rate = static_cast<float>(lr);
  const PretrainResult result = Pretrain(pc, train);
  SaveCheckpoint(out, pc.spec, result.params);
  std::cout << "epochs " << epochs << "  final loss " << Fixed(result.log.back().mean_loss, 4)
            << "  train accuracy " << Fixed(result.log.back().accuracy) << "  -> "
            << out << "\n";
  return 0;
}

int Run(const Overrides& overrides) {
  const ExperimentConfig config = overrides.Build();
  if (config.transport == TransportMode::kTcp && config.role == NodeRole::kSource) {
    const std::vector<SourceServiceLog> logs = RunSourceService(config);
    nlohmann::json j = nlohmann::json::array();
    for (const SourceServiceLog& log : logs) {
      j.push_back({{"seed", log.seed}, {"rounds", log.rounds}});
      std::cout << "seed " << log.seed << ": served " << log.rounds.size()
                << " sessions\n";
    }
    if (!config.out.empty()) {
      std::filesystem::create_directories(config.out);
      std::ofstream(std::filesystem::path(config.out) / "source_log.json")
          << j.dump(2) << "\n";
    }
    return 0;
  }
  const ExperimentReport report = config.transport == TransportMode::kTcp
                                      ? RunTargetClient(config)
                                      : RunExperiment(config);
  PrintReport(report);
  if (!config.out.empty()) {
    WriteReport(config.out, report);
    std::cout << "report -> " << config.out << "\n";
  }
  return 0;
}

int Sweep(const Overrides& overrides, const std::string& kind,
          const std::vector<std::string>& values) {
  const ExperimentConfig config = overrides.Build();
  const SweepResult result = RunSweep(config, ParseSweepKind(kind), values);
  for (std::size_t p = 0; p < result.reports.size(); ++p) {
    const ReportAggregate& a = result.reports[p].aggregate;
    std::cout << result.labels[p] << ": AUROC " << Fixed(a.auroc.mean) << " ± "
              << Fixed(a.auroc.std) << "  FPR95 " << Fixed(a.fpr95.mean)
              << "  mean rounds ID " << Fixed(a.id_mean_rounds.mean, 1) << "  OOD "
              << Fixed(a.ood_mean_rounds.mean, 1) << "\n";
  }
  if (!config.out.empty()) {
    WriteSweep(config.out, result);
    std::cout << "sweep -> " << config.out << "\n";
  }
  return 0;
}

int Verify(const std::string& dir) {
  const VerifyResult result = VerifyReport(dir);
  for (const std::string& m : result.mismatches) std::cout << "mismatch: " << m << "\n";
  std::cout << (result.ok ? "report verified" : "report does NOT verify") << "\n";
  return result.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized isolation networks for OOD detection"};
  app.require_subcommand(1);

  std::string gen_out = "data", gen_config;
  std::uint64_t gen_seed = 1;
  std::optional<std::string> gen_artifact, gen_ood;
  std::optional<int> gen_train;
  CLI::App* gen = app.add_subcommand("generate", "write the synthetic splits");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "data seed");
  gen->add_option("--config", gen_config, "JSON config (its data section)")
      ->check(CLI::ExistingFile);
  gen->add_option("--artifact", gen_artifact, "corner_square | stripe");
  gen->add_option("--ood-kind", gen_ood, "artifact | intensity_shift");
  gen->add_option("--train-per-class", gen_train, "training samples per class");

  std::string pre_data = "data", pre_out = "model.isck", pre_preset = "base";
  int pre_epochs = PretrainConfig{}.epochs;
  double pre_lr = PretrainConfig{}.optimizer.learning_rate;
  std::uint64_t pre_seed = 1;
  CLI::App* pre = app.add_subcommand("pretrain", "train the primary classifier");
  pre->add_option("--data", pre_data, "directory written by 'generate'");
  pre->add_option("--out", pre_out, "checkpoint path");
  pre->add_option("--preset", pre_preset, "slim | base | deep");
  pre->add_option("--epochs", pre_epochs, "training epochs");
  pre->add_option("--lr", pre_lr, "Adam learning rate");
  pre->add_option("--seed", pre_seed, "initialization and shuffling seed");

  Overrides run_flags;
  CLI::App* run = app.add_subcommand("run", "score a target pool");
  run_flags.Register(run);

  Overrides sweep_flags;
  std::string sweep_kind = "alpha";
  std::vector<std::string> sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "ablation sweep");
  sweep_flags.Register(sweep);
  sweep->add_option("--sweep", sweep_kind, "alpha | augment | width");
  sweep->add_option("--values", sweep_values, "sweep points (default grid if empty)")
      ->delimiter(',');

  std::string verify_dir;
  CLI::App* verify = app.add_subcommand(
      "verify-report", "recompute a report's aggregates from its CSV");
  verify->add_option("dir", verify_dir, "report directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) {
      return Generate(gen_out, gen_seed, gen_config, gen_artifact, gen_ood, gen_train);
    }
    if (*pre) {
      return PretrainCommand(pre_data, pre_out, pre_preset, pre_epochs, pre_lr, pre_seed);
    }
    if (*run) return Run(run_flags);
    if (*sweep) return Sweep(sweep_flags, sweep_kind, sweep_values);
    if (*verify) return Verify(verify_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
