// Copyright 2026 The Comfetch Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================
//
// comfetch: run experiments, verify, benchmark sketches, preview
// partitions, and plot metrics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "comfetch/analysis.h"
#include "comfetch/config.h"
#include "comfetch/errors.h"
#include "comfetch/experiment.h"
#include "comfetch/plots.h"
#include "comfetch/random.h"
#include "comfetch/sketch.h"
#include "comfetch/verify.h"

#ifndef COMFETCH_DATA_DIR
#define COMFETCH_DATA_DIR "tests/data"
#endif

namespace {

using namespace comfetch;

constexpr const char* kSeedEnv = "COMFETCH_SEED";

std::uint64_t ParseSeed(const std::string& text, const std::string& origin) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used, 0);
    if (used != text.size() || text.front() == '-') throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("seed", "bad value '" + text + "' from " + origin);
  }
}

// Precedence: config file < COMFETCH_SEED < --seed.
ExperimentConfig ResolveConfig(const std::string& path, const std::string& seed_flag,
                               const std::string& out_flag, const std::string& mode_flag) {
  ExperimentConfig cfg = LoadConfig(path);
  if (const char* env = std::getenv(kSeedEnv); env != nullptr && *env != '\0')
    cfg.seed = ParseSeed(env, kSeedEnv);
  if (!seed_flag.empty()) cfg.seed = ParseSeed(seed_flag, "--seed");
  if (!out_flag.empty()) cfg.out = out_flag;
  if (!mode_flag.empty()) cfg.mode = ParseMode(mode_flag);
  cfg.Validate();
  return cfg;
}

int CmdRun(const std::string& config, const std::string& seed, const std::string& out,
           const std::string& mode, bool quiet) {
  const ExperimentConfig cfg = ResolveConfig(config, seed, out, mode);
  RunOptions opts;
  opts.log = quiet ? nullptr : &std::cerr;
  const ExperimentResult r = RunExperiment(cfg, opts);
  if (r.exit_code != kExitOk) {
    std::cerr << "comfetch: " << r.error << "\n";
    return r.exit_code;
  }
  const auto& s = r.summary;
  std::cout << "rounds " << s["rounds_completed"] << "  final_loss " << s["final_loss"]
            << "  final_acc " << s["final_acc"] << "\n"
            << "comp_ratio_down " << s["comp_ratio_down"] << "  comp_ratio_up "
            << s["comp_ratio_up"] << "\n"
            << "wrote " << cfg.out << "/{metrics.csv,summary.json,config.ini}\n";
  return kExitOk;
}

int CmdVerify(const std::vector<int>& only, const std::string& data_dir,
              const std::string& seed) {
  VerifyOptions opts;
  opts.only = only;
  opts.data_dir = data_dir;
  if (!seed.empty()) opts.seed = ParseSeed(seed, "--seed");
  opts.log = &std::cerr;
  const std::vector<CheckResult> results = RunChecks(opts);
  std::size_t passed = 0;
  for (const CheckResult& r : results) {
    std::cout << FormatCheck(r) << "\n";
    passed += r.passed ? 1 : 0;
  }
  std::cout << passed << "/" << results.size() << " checks passed\n";
  return passed == results.size() ? kExitOk : 1;
}

int CmdBenchSketch(std::size_t d, std::size_t n, double ratio, std::size_t k, std::size_t reps,
                   const std::string& seed_text) {
  if (d == 0 || n == 0 || reps == 0 || k == 0)
    throw ConfigError("bench-sketch", "d, n, k and reps must be positive");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio", "must lie in (0, 1]");
  const std::uint64_t seed = seed_text.empty() ? 1 : ParseSeed(seed_text, "--seed");
  const std::size_t c = SketchLength(d, ratio);
  Rng rng(seed);
  Matrix w(d, n);
  for (double& v : w.data()) v = rng.Normal();
  Vector x(n);
  for (double& v : x) v = rng.Normal();

  using Clock = std::chrono::steady_clock;
  auto time_us = [&](auto&& fn) {
    const auto t0 = Clock::now();
    for (std::size_t r = 0; r < reps; ++r) fn(r);
    return std::chrono::duration<double, std::micro>(Clock::now() - t0).count() /
           static_cast<double>(reps);
  };

  double sink = 0.0;
  const double build = time_us([&](std::size_t r) {
    sink += SketchOperator(d, c, DeriveSeed(seed, {r})).bucket(0);
  });
  const SketchOperator op(d, c, DeriveSeed(seed, {0}));
  Matrix s;
  const double sketch = time_us([&](std::size_t) { s = SketchMatrix(op, w); });
  const double unsketch = time_us([&](std::size_t) { sink += UnsketchMatrix(op, s)(0, 0); });
  const double forward = time_us([&](std::size_t) {
    const Vector su = MatVec(s, x);
    sink += ApplyTranspose(op, su)[0];
  });
  const MultiSketch ms = MultiSketch::Make(d, c, k, seed);
  std::vector<Matrix> payloads;
  for (const SketchOperator& o : ms.ops) payloads.push_back(SketchMatrix(o, w));
  Matrix recovered;
  const double median = time_us([&](std::size_t) { recovered = RecoverMedian(ms, payloads); });

  double err_sq = 0.0, norm_sq = 0.0;
  for (std::size_t i = 0; i < w.data().size(); ++i) {
    const double e = recovered.data()[i] - w.data()[i];
    err_sq += e * e;
    norm_sq += w.data()[i] * w.data()[i];
  }

  std::printf("d=%zu n=%zu c=%zu k=%zu reps=%zu\n", d, n, c, k, reps);
  std::printf("build operator       %10.2f us\n", build);
  std::printf("sketch H*W           %10.2f us\n", sketch);
  std::printf("unsketch H^T*S       %10.2f us\n", unsketch);
  std::printf("sketched forward     %10.2f us\n", forward);
  std::printf("median recover (k)   %10.2f us\n", median);
  std::printf("client bytes         %10zu (dense %zu)\n", WireBytes(c, n), 4 * d * n);
  std::printf("relative recovery error %.4f\n", std::sqrt(err_sq / norm_sq));
  if (sink == 12345.678) std::printf(" ");
  return kExitOk;
}

int CmdPartitionPreview(const std::string& config, const std::string& seed) {
  const ExperimentConfig cfg = ResolveConfig(config, seed, "", "");
  const ExperimentData data = PrepareExperiment(cfg);
  std::printf("partition=%s clients=%zu train=%zu eval=%zu\n",
              ToString(cfg.partition).c_str(), data.clients.size(),
              data.train.data.size(), data.eval.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < data.clients.size(); ++i) {
    const ClientDataset& c = data.clients[i];
    assigned += c.size();
    std::map<int, std::size_t> hist;
    for (const Sample& s : c.examples)
      if (s.label >= 0) ++hist[s.label];
    std::printf("client %3zu  examples %6zu  labels %2zu", i, c.size(), c.DistinctLabels());
    if (!hist.empty()) {
      std::printf("  [");
      bool first = true;
      for (const auto& [label, count] : hist) {
        std::printf("%s%d:%zu", first ? "" : " ", label, count);
        first = false;
      }
      std::printf("]");
    }
    std::printf("\n");
  }
  std::printf("assigned %zu of %zu\n", assigned, data.train.data.size());
  return kExitOk;
}

int CmdPlot(const std::vector<std::string>& csvs, const std::string& out) {
  for (const std::string& p : EmitPlots(csvs, out)) std::cout << "wrote " << p << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training with count-sketched client weights"};
  app.require_subcommand(1);

  std::string config, seed, out, mode, data_dir = COMFETCH_DATA_DIR;
  bool quiet = false;
  std::vector<int> only;
  std::vector<std::string> csvs;
  std::size_t d = 256, n = 256, k = 1, reps = 20;
  double ratio = 0.5;

  CLI::App* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("--config", config, "config file")->required();
  run->add_option("--seed", seed, "root seed (overrides " + std::string(kSeedEnv) + ")");
  run->add_option("--out", out, "output directory");
  run->add_option("--mode", mode, "comfetch | uncompressed");
  run->add_flag("--quiet", quiet, "no progress output");

  CLI::App* verify = app.add_subcommand("verify", "run the oracle and acceptance checks");
  verify->add_option("--only", only, "check ids to run")->delimiter(',');
  verify->add_option("--data-dir", data_dir, "directory with the digit IDX files");
  verify->add_option("--seed", seed, "root seed");

  CLI::App* bench = app.add_subcommand("bench-sketch", "time sketch operations");
  bench->add_option("--d", d, "rows");
  bench->add_option("--n", n, "columns");
  bench->add_option("--ratio", ratio, "c/d");
  bench->add_option("--k", k, "sketches for median recovery");
  bench->add_option("--reps", reps, "repetitions");
  bench->add_option("--seed", seed, "seed");

  CLI::App* preview = app.add_subcommand("partition-preview", "show the client partition");
  preview->add_option("--config", config, "config file")->required();
  preview->add_option("--seed", seed, "root seed");

  CLI::App* plot = app.add_subcommand("plot", "render SVG charts from metrics CSV files");
  plot->add_option("--out", out, "output directory")->required();
  plot->add_option("csv", csvs, "metrics.csv files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return CmdRun(config, seed, out, mode, quiet);
    if (*verify) return CmdVerify(only, data_dir, seed);
    if (*bench) return CmdBenchSketch(d, n, ratio, k, reps, seed);
    if (*preview) return CmdPartitionPreview(config, seed);
    if (*plot) return CmdPlot(csvs, out);
  } catch (const ConfigError& e) {
    std::cerr << "comfetch: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractViolation& e) {
    std::cerr << "comfetch: invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "comfetch: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "comfetch: I/O error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
