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

// Acceptance gate. Each criterion prints one PASS/FAIL line; with
// --criterion N only that one runs. Exit status is non-zero if any failed.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "isonet/dison.h"
#include "isonet/experiment.h"
#include "isonet/metrics.h"
#include "isonet/nn.h"
#include "isonet/transport.h"
#include "oracles.h"

namespace isonet {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// 1. One local SGD step per round with alpha = |B_s| / (|B_s| + N) tracks
// centralized training with N target replicas.
Outcome CriterionEquivalence() {
  const auto start = Clock::now();
  constexpr int kRounds = 20;
  double worst = 0.0;
  bool all_rounds = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SyntheticConfig data;
    data.seed = seed;
    const SyntheticSplits splits = Generate(data);
    NetworkSpec spec = NetworkSpec::FromPreset("base", splits.train.input_dim(), 2);
    spec.seed = seed;
    const ParameterVector pretrained = InitParams(spec, HeadKind::kMulticlass);
    const std::vector<float>& target = splits.ood_test[seed].pixels;

    DisonOptions options;
    options.plan.local_steps = 1;
    options.plan.weights = AggregationWeights::FromOversampling(16, 4);
    options.isolation.optimizer = {OptimizerKind::kSgd, 1e-2f};
    options.isolation.batch_size = 16;
    options.isolation.replicas = 4;
    // Convergence is only possible at the last round, so both runs take
    // exactly kRounds steps.
    options.isolation.convergence.stability_window = kRounds;
    options.isolation.convergence.max_rounds = kRounds;
    const IsolationSeeds seeds = IsolationSeeds::Derive(seed, 0);

    std::vector<ParameterVector> central, decentral;
    CentralizedHooks hooks;
    hooks.on_step = [&](int, const ParameterVector& p) { central.push_back(p); };
    RunCentralized(spec, pretrained, splits.train, target, options.isolation, seeds, hooks);
    DisonRunOptions run;
    run.on_global = [&](int, const ParameterVector& p) { decentral.push_back(p); };
    RunDison(spec, pretrained, splits.train, target, options, seeds, run);

    if (central.size() != kRounds || decentral.size() != kRounds) all_rounds = false;
    for (std::size_t r = 0; r < std::min(central.size(), decentral.size()); ++r) {
      for (std::size_t i = 0; i < central[r].size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(central[r][i]) - decentral[r][i]));
      }
    }
  }
  const double secs = Seconds(start);
  return {all_rounds && worst <= 1e-5 && secs < 10.0,
          Fmt("max |theta_c - theta_d| = %.3g over 3 seeds x %d rounds (tol 1e-5), %.1f s",
              worst, kRounds, secs)};
}

// 2. Backprop against central differences of an independent double oracle.
Outcome CriterionGradients() {
  const auto start = Clock::now();
  Rng rng(2024);
  constexpr int kTriples = 120;
  double worst_double = 0.0, worst_float = 0.0;
  int checked = 0, skipped = 0;
  for (int trial = 0; trial < kTriples; ++trial) {
    const HeadKind head = trial % 2 ? HeadKind::kBinary : HeadKind::kMulticlass;
    const bool norm = (trial / 2) % 2 == 0;
    const testing::GradientCase c = testing::RandomGradientCase(rng, norm, head);
    const testing::OracleBatch ob = c.AsOracleBatch();
    const std::vector<double> p(c.params.values().begin(), c.params.values().end());

    std::vector<BasicExample<double>> batch;
    for (std::size_t i = 0; i < ob.inputs.size(); ++i) batch.push_back({ob.inputs[i], ob.labels[i]});
    std::vector<double> grad(p.size());
    BatchLossAndGradient<double>(c.spec, c.params.layout(), p,
                                 std::span<const BasicExample<double>>(batch), grad);
    const testing::GradientCheck d = testing::CheckAgainstFiniteDifferences(
        c.spec, c.params.layout(), p, ob, grad, 1e-5);

    const std::vector<Example> examples = c.AsExamples();
    const ParameterVector g = Gradient(c.spec, c.params, examples);
    const std::vector<double> gf(g.values().begin(), g.values().end());
    const testing::GradientCheck f = testing::CheckAgainstFiniteDifferences(
        c.spec, c.params.layout(), p, ob, gf, 1e-5);

    worst_double = std::max(worst_double, d.relative_error);
    worst_float = std::max(worst_float, f.relative_error);
    checked += d.checked;
    skipped += d.skipped;
  }
  const double secs = Seconds(start);
  return {worst_double < 1e-4 && worst_float < 1e-4 && checked > 0 && secs < 30.0,
          Fmt("%d triples, worst rel err double %.2e float %.2e (tol 1e-4), "
              "%d coords checked, %d kink-skipped, %.1f s",
              kTriples, worst_double, worst_float, checked, skipped, secs)};
}

ExperimentConfig BenchmarkConfig() {
  ExperimentConfig c;  // cc_dison, 50 ID / 50 OOD, seeds 1 2 3
  c.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return c;
}

// 3. Default artifact benchmark.
Outcome CriterionBenchmark() {
  const auto start = Clock::now();
  const ExperimentReport r = RunExperiment(BenchmarkConfig());
  const double secs = Seconds(start);
  std::string per_seed;
  for (const SeedSummary& s : r.seeds) {
    per_seed += Fmt(" [seed %llu: %.3f vs MSP %.3f]",
                    static_cast<unsigned long long>(s.seed), s.auroc, s.msp_auroc);
  }
  const ReportAggregate& a = r.aggregate;
  return {a.auroc.mean >= 0.90 && a.auroc.mean > a.msp_auroc.mean && secs < 600.0,
          Fmt("AUROC %.3f +- %.3f (>= 0.90), MSP %.3f +- %.3f, FPR95 %.3f, %.0f s;",
              a.auroc.mean, a.auroc.std, a.msp_auroc.mean, a.msp_auroc.std, a.fpr95.mean,
              secs) +
              per_seed};
}

double Median(std::vector<double> v) {
  return Quantiles(std::span<const double>(v), std::vector<double>{0.5})[0];
}

// 4. Rounds grow with alpha; OOD converges no later than ID at alpha = 0.8.
Outcome CriterionAlphaTrend() {
  const auto start = Clock::now();
  const ExperimentConfig base = BenchmarkConfig();
  const std::vector<std::string> grid = {"0.4", "0.5", "0.8", "0.95"};
  const SweepResult sweep = RunSweep(base, SweepKind::kAlpha, grid);
  std::vector<double> alphas;
  for (const std::string& g : grid) alphas.push_back(std::stod(g));

  double rho_sum = 0.0;
  bool medians_ok = true;
  std::string detail;
  for (std::size_t s = 0; s < base.seeds.size(); ++s) {
    const std::uint64_t seed = base.seeds[s];
    std::vector<double> mean_rounds;
    for (const ExperimentReport& rep : sweep.reports) {
      double total = 0.0;
      int n = 0;
      for (const TargetRecord& t : rep.targets) {
        if (t.seed != seed) continue;
        total += t.score;
        ++n;
      }
      mean_rounds.push_back(total / n);
    }
    const double rho = testing::Spearman(alphas, mean_rounds);
    rho_sum += rho;

    std::vector<double> id, ood;
    for (const TargetRecord& t : sweep.reports[2].targets) {
      if (t.seed == seed) (t.ood ? ood : id).push_back(t.score);
    }
    const double id_med = Median(id), ood_med = Median(ood);
    medians_ok = medians_ok && ood_med <= id_med;
    detail += Fmt(" [seed %llu: rounds", static_cast<unsigned long long>(seed));
    for (double m : mean_rounds) detail += Fmt(" %.1f", m);
    detail += Fmt(", rho %.2f, median ID %.1f OOD %.1f]", rho, id_med, ood_med);
  }
  const double rho = rho_sum / static_cast<double>(base.seeds.size());
  return {rho > 0.0 && medians_ok,
          Fmt("mean Spearman rho %.3f (> 0), OOD median <= ID median at alpha 0.8: %s, %.0f s;",
              rho, medians_ok ? "yes" : "no", Seconds(start)) +
              detail};
}

// 5. Fast metrics against exhaustive enumeration.
Outcome CriterionMetrics() {
  const auto start = Clock::now();
  Rng rng(5);
  std::uniform_int_distribution<int> size(1, 50);
  int auroc_bad = 0, fpr_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int levels = trial % 3 == 0 ? 3 : (trial % 3 == 1 ? 20 : 1 << 20);
    std::uniform_int_distribution<int> value(0, levels - 1);
    ScoreSet s;
    s.id_scores.resize(size(rng));
    s.ood_scores.resize(size(rng));
    for (double& v : s.id_scores) v = value(rng) * 0.25;
    for (double& v : s.ood_scores) v = value(rng) * 0.25;
    auroc_bad += Auroc(s) != testing::BruteForceAuroc(s.id_scores, s.ood_scores);
    fpr_bad += FprAtTpr(s) != testing::BruteForceFpr(s.id_scores, s.ood_scores, 0.95);
  }
  const double secs = Seconds(start);
  return {auroc_bad == 0 && fpr_bad == 0 && secs < 5.0,
          Fmt("1000 random sets: %d AUROC and %d FPR95 mismatches, %.2f s", auroc_bad,
              fpr_bad, secs)};
}

// 6. Codec round trips and transport-independence of a full session.
Outcome CriterionTransport() {
  const auto start = Clock::now();
  Rng rng(6);
  const std::vector<float> specials = {
      0.0f, -0.0f, std::numeric_limits<float>::infinity(),
      -std::numeric_limits<float>::infinity(), std::numeric_limits<float>::quiet_NaN(),
      std::numeric_limits<float>::denorm_min(), std::numeric_limits<float>::max(),
      std::numeric_limits<float>::lowest(), std::numeric_limits<float>::min()};
  std::vector<std::size_t> lengths = {0, 1, 2, 100000};
  std::uniform_int_distribution<std::size_t> len(3, 100000);
  for (int i = 0; i < 20; ++i) lengths.push_back(len(rng));
  int codec_bad = 0;
  for (std::size_t n : lengths) {
    std::vector<float> p(n);
    for (auto& v : p) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
    for (std::size_t k = 0; k < std::min(n, specials.size()); ++k) p[(k * 7919) % n] = specials[k];
    const std::vector<RoundMessage> messages = {
        {InitModel{p}}, {LocalParams{3, p}}, {GlobalParams{4, true, p}}};
    for (const RoundMessage& m : messages) {
      const RoundMessage back = Decode(Encode(m));
      const std::vector<float>* q = nullptr;
      if (auto* x = std::get_if<InitModel>(&back.body)) q = &x->params;
      if (auto* x = std::get_if<LocalParams>(&back.body)) q = &x->params;
      if (auto* x = std::get_if<GlobalParams>(&back.body)) q = &x->params;
      if (!q || back.type() != m.type() || q->size() != n ||
          (n > 0 && std::memcmp(q->data(), p.data(), n * sizeof(float)) != 0)) {
        ++codec_bad;
      }
    }
  }

  ExperimentConfig config;
  const SeedContext ctx = PrepareSeed(config, 1);
  const DisonOptions options = config.MakeDisonOptions(ctx.train.size());
  int session_bad = 0;
  std::string detail;
  const std::vector<const Sample*> targets = {&ctx.id_test[0], &ctx.ood_test[0],
                                              &ctx.id_test[1], &ctx.ood_test[1]};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const IsolationSeeds seeds = IsolationSeeds::Derive(1, i);
    DisonRunOptions inproc;
    DisonRunOptions tcp;
    tcp.transport = TransportKind::kTcpLoopback;
    const DisonResult a = RunDison(ctx.spec, ctx.pretrained, ctx.train, targets[i]->pixels,
                                   options, seeds, inproc);
    const DisonResult b = RunDison(ctx.spec, ctx.pretrained, ctx.train, targets[i]->pixels,
                                   options, seeds, tcp);
    session_bad += a.score != b.score || a.final_checksum != b.final_checksum;
    detail += Fmt(" [%s R %d/%d crc %08x/%08x]", targets[i]->ood ? "OOD" : "ID", a.score,
                  b.score, a.final_checksum, b.final_checksum);
  }
  return {codec_bad == 0 && session_bad == 0,
          Fmt("%zu vectors x 3 types: %d codec mismatches; tcp vs in-process:%s; %.1f s",
              lengths.size(), codec_bad, detail.c_str(), Seconds(start))};
}

// 7. Augmentation on both nodes against no augmentation.
Outcome CriterionAugmentation() {
  const auto start = Clock::now();
  const SweepResult sweep = RunSweep(BenchmarkConfig(), SweepKind::kAugment);
  double both = 0.0, none = 0.0;
  std::string detail;
  for (std::size_t i = 0; i < sweep.labels.size(); ++i) {
    const double auroc = sweep.reports[i].aggregate.auroc.mean;
    if (sweep.labels[i] == "both") both = auroc;
    if (sweep.labels[i] == "none") none = auroc;
    detail += Fmt(" %s %.3f +- %.3f;", sweep.labels[i].c_str(), auroc,
                  sweep.reports[i].aggregate.auroc.std);
  }
  return {both >= none - 0.02,
          Fmt("AUROC both %.3f >= none %.3f - 0.02; all settings:", both, none) + detail +
              Fmt(" %.0f s", Seconds(start))};
}

int RunCli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(ISONET_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 8. Misclassification ablation through the command-line tool.
Outcome CriterionMisclass() {
  const auto start = Clock::now();
  const fs::path dir = fs::temp_directory_path() / ("isonet_misclass_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "cli.log";
  const std::string data = (dir / "data").string();
  const std::string ckpt = (dir / "model.isck").string();
  if (RunCli("generate --out " + data + " --seed 1", log) != 0 ||
      RunCli("pretrain --data " + data + " --out " + ckpt + " --seed 1", log) != 0) {
    return {false, "generate/pretrain failed, see " + log.string()};
  }
  bool ok = true;
  std::string detail;
  for (const std::string mode : {"none", "all_wrong", "id_wrong", "ood_wrong"}) {
    const fs::path out = dir / mode;
    const int rc = RunCli("run --data " + data + " --checkpoint " + ckpt +
                              " --seeds 1 --misclass " + mode + " --out " + out.string(),
                          log);
    if (rc != 0) {
      ok = false;
      detail += " " + mode + ": exit " + std::to_string(rc) + ";";
      continue;
    }
    std::ifstream in(out / "report.json");
    const nlohmann::json report = nlohmann::json::parse(in);
    const std::string label = report["config"]["misclass"].get<std::string>();
    const bool verified = RunCli("verify-report " + out.string(), log) == 0;
    int flipped = 0;
    for (const auto& t : report["targets"]) {
      flipped += t["reported_class"] != t["predicted_class"];
    }
    ok = ok && label == mode && verified;
    detail += Fmt(" %s: AUROC %.3f, label %s, %d reported classes flipped%s;", mode.c_str(),
                  report["aggregate"]["auroc"]["mean"].get<double>(), label.c_str(), flipped,
                  verified ? "" : ", verify-report FAILED");
  }
  fs::remove_all(dir);
  return {ok, "report-only:" + detail + Fmt(" %.0f s", Seconds(start))};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace isonet

int main(int argc, char** argv) {
  using namespace isonet;
  const std::vector<Criterion> criteria = {
      {1, "one-step equivalence", CriterionEquivalence},
      {2, "gradient correctness", CriterionGradients},
      {3, "artifact benchmark", CriterionBenchmark},
      {4, "alpha trend", CriterionAlphaTrend},
      {5, "metric oracles", CriterionMetrics},
      {6, "transport fidelity", CriterionTransport},
      {7, "augmentation effect", CriterionAugmentation},
      {8, "misclassification ablation", CriterionMisclass},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d (%s): %s  %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
