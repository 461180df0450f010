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

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "comfetch/config.h"
#include "comfetch/data_io.h"
#include "comfetch/errors.h"
#include "comfetch/experiment.h"
#include "comfetch/plots.h"
#include "test_util.h"

#ifndef COMFETCH_DATA_DIR
#define COMFETCH_DATA_DIR "tests/data"
#endif

namespace comfetch {
namespace {

namespace fs = std::filesystem;

void WriteFile(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr const char* kSmallConfig =
    "# tiny run\n"
    "network = fc:6-8-3\n"
    "dataset = synthetic:teacher-fc,d=6,n=120,seed=3,classes=3\n"
    "holdout = 0.25\n"
    "clients = 4 ; trailing comment\n"
    "sample = 2\n"
    "rounds = 6\n"
    "batch = 8\n"
    "lr = 0.01\n";

// --- config ----------------------------------------------------------------------------

TEST_CASE("config parses keys, comments and defaults") {
  const ExperimentConfig cfg = ParseConfig(kSmallConfig);
  CHECK(cfg.network == "fc:6-8-3");
  CHECK(cfg.clients == 4);
  CHECK(cfg.sample == 2);
  CHECK(cfg.rounds == 6);
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.momentum == 0.9);
  CHECK(cfg.topk == 0.10);
  CHECK(cfg.batch == 8);
  CHECK(cfg.mode == Mode::kComfetch);
  CHECK_FALSE(cfg.loss.has_value());
}

TEST_CASE("sample defaults to the client count") {
  const ExperimentConfig cfg =
      ParseConfig("network = fc:2-2-2\ndataset = csv:x.csv\nclients = 7\n");
  CHECK(cfg.sample == 7);
}

TEST_CASE("config errors name the offending key") {
  const std::string base = "network = fc:2-2-2\ndataset = csv:x.csv\n";
  CHECK_THROWS_AS(ParseConfig(base + "lr = fast\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig(base + "colour = red\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig(base + "lr = 0.1\nlr = 0.2\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig(base + "identity_hash = maybe\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig(base + "clients = 2\nsample = 3\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig(base + "momentum = 1\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig(base + "topk = 0\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig(base + "partition = dirichlet\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig(base + "just words\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("dataset = csv:x.csv\n"), ConfigError);
  CHECK_THROWS_AS(ParseConfig("network = fc:2-2\ndataset = csv:x.csv\n"), ConfigError);
  try {
    ParseConfig(base + "rounds = -3\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("rounds") != std::string::npos);
  }
  CHECK_THROWS_AS(LoadConfig("/nonexistent/comfetch.ini"), IoError);
}

TEST_CASE("property: ToText round-trips through the parser") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    ExperimentConfig cfg;
    cfg.network = "fc:" + std::to_string(testing::RandomIn(rng, 1, 9)) + "-" +
                  std::to_string(testing::RandomIn(rng, 1, 9)) + "-3";
    cfg.dataset = "synthetic:teacher-linear,d=3,n=10";
    cfg.clients = testing::RandomIn(rng, 1, 20);
    cfg.sample = testing::RandomIn(rng, 1, cfg.clients);
    cfg.rounds = testing::RandomIn(rng, 1, 1000);
    cfg.lr = rng.Uniform() + 1e-6;
    cfg.momentum = 0.99 * rng.Uniform();
    cfg.topk = 1.0 - 0.99 * rng.Uniform();
    cfg.sketch_ratio = 0.01 + 0.99 * rng.Uniform();
    cfg.sketches = testing::RandomIn(rng, 1, 5);
    cfg.mode = trial % 2 ? Mode::kComfetch : Mode::kUncompressed;
    if (trial % 3 == 0) cfg.loss = LossKind::kSquaredError;
    cfg.partition = trial % 3 == 1 ? PartitionStrategy::kLabelShard : PartitionStrategy::kIid;
    cfg.full_grad = trial % 2 == 0;
    cfg.seed = rng.Next();
    const ExperimentConfig back = ParseConfig(cfg.ToText());
    CHECK(back.ToText() == cfg.ToText());
    CHECK(back.lr == cfg.lr);
    CHECK(back.seed == cfg.seed);
  }
}

TEST_CASE("network spec parsing") {
  const NetworkSpec fc = ParseNetworkSpec("fc:784-64-10");
  CHECK(fc.input_size() == 784);
  CHECK(fc.outputs == 10);
  CHECK(fc.num_layers() == 1);
  const NetworkSpec conv = ParseNetworkSpec("conv:in=1,m=4,image=3x3,q=4,L=3,out=2");
  CHECK(conv.channels == 4);
  CHECK(conv.depth == 3);
  CHECK(conv.outputs == 2);
  CHECK(conv.c_res == 0.5);
  CHECK_THROWS_AS(ParseNetworkSpec("rnn:3"), ConfigError);
  CHECK_THROWS_AS(ParseNetworkSpec("conv:m=4,image=3x3,q=5,L=2"), ConfigError);
  CHECK_THROWS_AS(ParseNetworkSpec("conv:m=4,image=3x3,q=4,L=2,zoom=2"), ConfigError);
  CHECK_THROWS_AS(ParseNetworkSpec("conv:m=4,image=3,q=4,L=2"), ConfigError);
}

TEST_CASE("key lists and losses") {
  const auto kv = ParseKeyList("teacher-fc, d = 4 ,n=10");
  CHECK(kv.at("teacher-fc").empty());
  CHECK(kv.at("d") == "4");
  CHECK(kv.at("n") == "10");
  CHECK(ParseLoss("mse") == LossKind::kSquaredError);
  CHECK(ParseLoss(ToString(LossKind::kSoftmaxCrossEntropy)) == LossKind::kSoftmaxCrossEntropy);
  CHECK_THROWS_AS(ParseLoss("hinge"), ConfigError);
}

// --- datasets -----------------------------------------------------------------------------

TEST_CASE("labeled CSV is standardized per feature") {
  const fs::path dir = testing::TempDir("csv");
  WriteFile(dir / "train.csv", "a,b,label\n1,10,0\n3,10,2\n\n5,10,1\n");
  const LoadedDataset d = ReadCsv((dir / "train.csv").string());
  CHECK(d.features == 2);
  CHECK(d.classes == 3);
  REQUIRE(d.data.size() == 3);
  // Column a: mean 3, population sd sqrt(8/3). Column b is constant.
  const double sd = std::sqrt(8.0 / 3.0);
  CHECK(d.data.examples[0].features[0] == doctest::Approx(-2.0 / sd));
  CHECK(d.data.examples[2].features[0] == doctest::Approx(2.0 / sd));
  CHECK(d.data.examples[1].features[1] == 0.0);
  CHECK(d.data.examples[1].label == 2);
  CHECK(d.data.examples[1].target == Vector{0, 0, 1});

  WriteFile(dir / "test.csv", "7,12,1\n");
  const LoadedDataset t = LoadDataset("csv:" + (dir / "test.csv").string(), &d.scaling);
  CHECK(t.data.examples[0].features[0] == doctest::Approx(4.0 / sd));
  CHECK(t.data.examples[0].features[1] == 2.0);
}

TEST_CASE("CSV with a real-valued last column is a regression set") {
  const fs::path dir = testing::TempDir("csv_reg");
  WriteFile(dir / "r.csv", "1,0.5\n2,-1.25\n");
  const LoadedDataset d = ReadCsv((dir / "r.csv").string());
  CHECK(d.classes == 0);
  CHECK(d.data.examples[1].target == Vector{-1.25});
  CHECK(d.data.examples[1].label < 0);
}

TEST_CASE("malformed CSV files raise I/O errors") {
  const fs::path dir = testing::TempDir("csv_bad");
  WriteFile(dir / "ragged.csv", "1,2,0\n1,0\n");
  WriteFile(dir / "text.csv", "1,2,0\n1,x,0\n");
  WriteFile(dir / "empty.csv", "a,b\n");
  WriteFile(dir / "narrow.csv", "1\n2\n");
  CHECK_THROWS_AS(ReadCsv((dir / "ragged.csv").string()), IoError);
  CHECK_THROWS_AS(ReadCsv((dir / "text.csv").string()), IoError);
  CHECK_THROWS_AS(ReadCsv((dir / "empty.csv").string()), IoError);
  CHECK_THROWS_AS(ReadCsv((dir / "narrow.csv").string()), IoError);
  CHECK_THROWS_AS(ReadCsv((dir / "missing.csv").string()), IoError);
  WriteFile(dir / "two.csv", "1,2,0\n3,4,1\n");
  WriteFile(dir / "three.csv", "1,2,3,0\n");
  const LoadedDataset two = ReadCsv((dir / "two.csv").string());
  CHECK_THROWS_AS(ReadCsv((dir / "three.csv").string(), &two.scaling), IoError);
}

TEST_CASE("IDX files round-trip") {
  const fs::path dir = testing::TempDir("idx");
  const std::vector<std::vector<std::uint8_t>> px{{0, 255, 51, 102}, {255, 0, 0, 0},
                                                  {1, 2, 3, 4}};
  const std::vector<std::uint8_t> labels{3, 0, 1};
  const std::string img = (dir / "img").string(), lab = (dir / "lab").string();
  WriteIdx(img, lab, px, labels, 2, 2);
  const LoadedDataset d = ReadIdx(img, lab);
  CHECK(d.features == 4);
  CHECK(d.classes == 4);
  REQUIRE(d.data.size() == 3);
  CHECK(d.data.examples[0].features == Vector{0.0, 1.0, 0.2, 0.4});
  CHECK(d.data.examples[0].label == 3);
  CHECK(d.data.examples[0].target == Vector{0, 0, 0, 1});
  CHECK(LoadDataset("idx:" + img + "," + lab + ",limit=2").data.size() == 2);

  // Truncation and wrong magic numbers.
  const std::string bytes = ReadFile(img);
  WriteFile(dir / "short", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(ReadIdx((dir / "short").string(), lab), IoError);
  CHECK_THROWS_AS(ReadIdx(lab, img), IoError);
  CHECK_THROWS_AS(ReadIdx(img, (dir / "nothing").string()), IoError);
  WriteIdx((dir / "img2").string(), (dir / "lab2").string(), {{1, 2, 3, 4}}, {0}, 2, 2);
  CHECK_THROWS_AS(ReadIdx(img, (dir / "lab2").string()), IoError);
}

TEST_CASE("bundled digits data loads with the expected shape") {
  const fs::path dir(COMFETCH_DATA_DIR);
  const LoadedDataset d = ReadIdx((dir / "digits-train-images-idx3-ubyte").string(),
                                  (dir / "digits-train-labels-idx1-ubyte").string());
  CHECK(d.data.size() == 2000);
  CHECK(d.features == 784);
  CHECK(d.classes == 10);
  std::size_t outside = 0;
  for (const Sample& s : d.data.examples)
    for (double v : s.features) outside += v < 0.0 || v > 1.0 ? 1 : 0;
  CHECK(outside == 0);
}

TEST_CASE("synthetic teachers are deterministic and self-consistent") {
  const LoadedDataset a = LoadDataset("synthetic:teacher-fc,d=5,n=40,seed=2,classes=4");
  const LoadedDataset b = TeacherFcDataset(5, 40, 2, 4, 5, 0);
  REQUIRE(a.data.size() == 40);
  CHECK(a.classes == 4);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(a.data.examples[i].features == b.data.examples[i].features);
    CHECK(a.data.examples[i].target.size() == 4);
  }
  const LoadedDataset other = TeacherFcDataset(5, 40, 2, 4, 5, 1);
  CHECK(other.data.examples[0].features != a.data.examples[0].features);
  const LoadedDataset lin = LoadDataset("synthetic:teacher-linear,d=3,n=10,outputs=2");
  CHECK(lin.classes == 0);
  CHECK(lin.data.examples[0].target.size() == 2);
  CHECK_THROWS_AS(LoadDataset("synthetic:teacher-fc,n=4"), ConfigError);
  CHECK_THROWS_AS(LoadDataset("synthetic:random,d=2,n=2"), ConfigError);
  CHECK_THROWS_AS(LoadDataset("parquet:x"), ConfigError);
  CHECK_THROWS_AS(LoadDataset("nocolon"), ConfigError);
}

// --- experiments -----------------------------------------------------------------------------

TEST_CASE("a run writes metrics and a summary") {
  const fs::path dir = testing::TempDir("run");
  ExperimentConfig cfg = ParseConfig(kSmallConfig);
  cfg.out = dir.string();
  cfg.seed = 11;
  const ExperimentResult r = RunExperiment(cfg);
  CHECK(r.exit_code == kExitOk);
  CHECK(r.rows.size() == 6);
  const std::string csv = ReadFile(dir / "metrics.csv");
  CHECK(csv.rfind(MetricsHeader(), 0) == 0);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n' ? 1 : 0;
  CHECK(lines == 2 + 6);
  const auto summary = nlohmann::json::parse(ReadFile(dir / "summary.json"));
  CHECK(summary["schema_version"] == kSummarySchemaVersion);
  CHECK(summary["status"] == "ok");
  CHECK(summary["rounds_completed"] == 6);
  CHECK(summary["seed"] == 11);
  CHECK(summary["comp_ratio_down"].get<double>() > 1.0);
  CHECK(summary.contains("ledger"));
  CHECK(summary.contains("bound_report"));
  for (const MetricRow& row : r.rows) {
    CHECK(row.acc.has_value());
    CHECK(row.down_vals > 0);
  }
  for (std::size_t i = 1; i < r.rows.size(); ++i)
    CHECK(r.rows[i].min_grad_norm <= r.rows[i - 1].min_grad_norm);
}

TEST_CASE("runs replay bitwise from the seed") {
  ExperimentConfig cfg = ParseConfig(kSmallConfig);
  cfg.seed = 12;
  RunOptions ro;
  ro.write_files = false;
  const ExperimentResult a = RunExperiment(cfg, ro);
  const ExperimentResult b = RunExperiment(cfg, ro);
  CHECK(MetricsCsv(a.rows, false) == MetricsCsv(b.rows, false));
  CHECK(a.final_model.weights == b.final_model.weights);
  CHECK(a.final_model.output == b.final_model.output);
  cfg.seed = 13;
  CHECK(RunExperiment(cfg, ro).final_model.weights != a.final_model.weights);
}

TEST_CASE("a diverging run stops with the numeric exit code and still reports") {
  const fs::path dir = testing::TempDir("diverge");
  ExperimentConfig cfg = ParseConfig(kSmallConfig);
  cfg.out = dir.string();
  cfg.lr = 1e200;
  cfg.momentum = 0.0;
  cfg.topk = 1.0;
  cfg.rounds = 20;
  const ExperimentResult r = RunExperiment(cfg);
  CHECK(r.exit_code == kExitNumeric);
  CHECK(r.rows.size() < 20);
  const auto summary = nlohmann::json::parse(ReadFile(dir / "summary.json"));
  CHECK(summary["status"] == "numeric-failure");
  CHECK(summary["rounds_completed"] == r.rows.size());
}

TEST_CASE("metric rows format with empty accuracy cells") {
  MetricRow row;
  row.round = 3;
  row.loss = 0.5;
  row.min_grad_norm = 2.0;
  row.hh_ratio = 0.25;
  row.down_vals = 10;
  row.up_vals = 4;
  row.wall_ms = 7.4;
  CHECK(FormatMetricRow(row) == "3,0.5,,2,0.25,10,4,7\n");
  CHECK(FormatMetricRow(row, false) == "3,0.5,,2,0.25,10,4,\n");
}

TEST_CASE("accuracy and mean loss") {
  NetworkState net = InitNetwork(NetworkSpec::FullyConnected({2, 2}, 2), 1);
  net.weights[0] = Matrix::Identity(2);
  net.output = Matrix::Identity(2);
  ClientDataset data;
  for (int i = 0; i < 4; ++i) {
    Sample s;
    s.features = i % 2 ? Vector{0.0, 1.0} : Vector{1.0, 0.0};
    s.label = i < 3 ? i % 2 : 0;
    data.examples.push_back(s);
  }
  AttachOneHotTargets(data, 2);
  CHECK(Accuracy(net, data) == 0.75);
  CHECK(MeanLoss(net, ClientDataset{}, LossKind::kSquaredError) == 0.0);
  CHECK(MeanLoss(net, data, LossKind::kSquaredError) == doctest::Approx(0.25));
}

// --- plots ---------------------------------------------------------------------------------

TEST_CASE("plots are emitted for every metric present") {
  const fs::path dir = testing::TempDir("plots");
  ExperimentConfig cfg = ParseConfig(kSmallConfig);
  cfg.out = (dir / "a").string();
  RunExperiment(cfg);
  cfg.out = (dir / "b").string();
  cfg.mode = Mode::kUncompressed;
  RunExperiment(cfg);
  const auto written = EmitPlots(
      {(dir / "a" / "metrics.csv").string(), (dir / "b" / "metrics.csv").string()},
      (dir / "svg").string());
  CHECK(written.size() == 4);
  for (const std::string& p : written) {
    const std::string svg = ReadFile(p);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
  CHECK_THROWS_AS(EmitPlots({}, (dir / "svg").string()), IoError);
  WriteFile(dir / "bad.csv", "round,loss\n1,0.5\n");
  CHECK_THROWS_AS(ReadMetricsCsv((dir / "bad.csv").string(), {"round", "acc"}), IoError);
  const MetricsTable t = ReadMetricsCsv((dir / "a" / "metrics.csv").string(), {"round"});
  CHECK(t.rows == 6);
  CHECK(t.values.at("round").front() == 1.0);
}

TEST_CASE("line chart handles a flat series and log scale") {
  const std::string svg =
      RenderLineChart("t", "x", "y", {{"flat", {{0, 1.0}, {1, 1.0}}}, {"up", {{0, 1}, {1, 100}}}},
                      true);
  CHECK(svg.find("flat") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);
}

}  // namespace
}  // namespace comfetch
