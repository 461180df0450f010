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

#include "comfetch/experiment.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "comfetch/analysis.h"
#include "comfetch/errors.h"
#include "comfetch/random.h"

namespace comfetch {

namespace {

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json LedgerJson(const CommLedger& ledger) {
  const LedgerTotals t = ledger.Totals();
  nlohmann::json j;
  j["rounds"] = ledger.rounds().size();
  j["down_vals"] = t.down_vals;
  j["up_vals"] = t.up_vals;
  j["down_bytes"] = t.down_bytes;
  j["up_bytes"] = t.up_bytes;
  j["baseline_down_vals"] = t.baseline_down_vals;
  j["baseline_up_vals"] = t.baseline_up_vals;
  j["output_layer_vals_per_direction"] = t.output_vals;
  nlohmann::json layers = nlohmann::json::array();
  if (!ledger.rounds().empty()) {
    const std::size_t n = ledger.rounds().front().layers.size();
    for (std::size_t l = 0; l < n; ++l) {
      LayerTraffic sum;
      for (const RoundTraffic& r : ledger.rounds()) {
        sum.down_vals += r.layers[l].down_vals;
        sum.up_vals += r.layers[l].up_vals;
        sum.down_bytes += r.layers[l].down_bytes;
        sum.up_bytes += r.layers[l].up_bytes;
        sum.baseline_vals += r.layers[l].baseline_vals;
      }
      layers.push_back({{"down_vals", sum.down_vals},
                        {"up_vals", sum.up_vals},
                        {"down_bytes", sum.down_bytes},
                        {"up_bytes", sum.up_bytes},
                        {"baseline_vals", sum.baseline_vals}});
    }
  }
  j["layers"] = layers;
  return j;
}

nlohmann::json BoundJson(const ErrorBoundReport& r) {
  return {{"epsilon", r.epsilon},           {"lambda", r.lambda},
          {"lambda_hat", r.lambda_hat},     {"terms", r.terms},
          {"terms_linear", r.terms_linear}, {"bound", r.bound},
          {"bound_linear", r.bound_linear}, {"empirical", r.empirical},
          {"holds", r.holds},               {"holds_linear", r.holds_linear}};
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

double Accuracy(const NetworkState& net, const ClientDataset& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const Sample& s : data.examples)
    if (Argmax(Forward(net, s.features).prediction) == s.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double MeanLoss(const NetworkState& net, const ClientDataset& data, LossKind loss) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const Sample& s : data.examples) total += SampleLoss(net, s, loss);
  return total / static_cast<double>(data.size());
}

std::string MetricsHeader() {
  return "# comfetch-metrics v" + std::to_string(kMetricsSchemaVersion) +
         "\nround,loss,acc,min_grad_norm,hh_ratio,down_vals,up_vals,wall_ms\n";
}

std::string FormatMetricRow(const MetricRow& row, bool with_wall) {
  std::ostringstream os;
  os << row.round << ',' << Num(row.loss) << ',' << (row.acc ? Num(*row.acc) : "") << ','
     << Num(row.min_grad_norm) << ',' << Num(row.hh_ratio) << ',' << row.down_vals << ','
     << row.up_vals << ',';
  if (with_wall) os << static_cast<long long>(std::llround(row.wall_ms));
  os << '\n';
  return os.str();
}

std::string MetricsCsv(const std::vector<MetricRow>& rows, bool with_wall) {
  std::string out = MetricsHeader();
  for (const MetricRow& r : rows) out += FormatMetricRow(r, with_wall);
  return out;
}

ExperimentData PrepareExperiment(const ExperimentConfig& cfg) {
  cfg.Validate();
  ExperimentData data;
  data.spec = ParseNetworkSpec(cfg.network);
  data.train = LoadDataset(cfg.dataset);
  if (data.train.data.empty()) throw ConfigError("dataset", "no examples");

  if (!cfg.test_dataset.empty()) {
    data.eval = LoadDataset(cfg.test_dataset, &data.train.scaling).data;
  } else if (cfg.holdout > 0.0) {
    auto& ex = data.train.data.examples;
    Rng rng(DeriveSeed(cfg.seed, {kHoldoutSalt}));
    rng.Shuffle(ex.begin(), ex.end());
    const auto held = static_cast<std::size_t>(cfg.holdout * static_cast<double>(ex.size()));
    if (held == 0 || held >= ex.size())
      throw ConfigError("holdout", "leaves an empty train or eval split");
    data.eval.examples.assign(ex.begin(), ex.begin() + static_cast<std::ptrdiff_t>(held));
    ex.erase(ex.begin(), ex.begin() + static_cast<std::ptrdiff_t>(held));
    data.eval.tag = data.train.data.tag + "/holdout";
  } else {
    data.eval = data.train.data;
  }

  if (data.spec.input_size() != data.train.features)
    throw ConfigError("network", "input size " + std::to_string(data.spec.input_size()) +
                                     " does not match the dataset's " +
                                     std::to_string(data.train.features) + " features");
  data.loss = cfg.loss ? *cfg.loss
                       : (data.train.classes > 0 ? LossKind::kSoftmaxCrossEntropy
                                                 : LossKind::kSquaredError);
  if (data.loss == LossKind::kSoftmaxCrossEntropy) {
    if (data.train.classes == 0) throw ConfigError("loss", "cross-entropy needs labeled data");
    if (data.spec.outputs != data.train.classes)
      throw ConfigError("network", std::to_string(data.spec.outputs) + " outputs for " +
                                       std::to_string(data.train.classes) + " classes");
  } else {
    const std::size_t t = data.train.data.examples.front().target.size();
    if (data.spec.outputs != t)
      throw ConfigError("network", std::to_string(data.spec.outputs) +
                                       " outputs for targets of length " + std::to_string(t));
  }

  try {
    data.clients = Partition(data.train.data, cfg.clients, cfg.partition,
                             DeriveSeed(cfg.seed, {kPartitionSalt}));
  } catch (const ContractViolation& e) {
    throw ConfigError("partition", e.what());
  }
  return data;
}

ExperimentResult RunExperiment(const ExperimentConfig& cfg, const RunOptions& options) {
  return RunExperiment(cfg, PrepareExperiment(cfg), options);
}

ExperimentResult RunExperiment(const ExperimentConfig& cfg, const ExperimentData& data,
                               const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  };

  std::filesystem::path out_dir(cfg.out);
  std::ofstream csv;
  if (options.write_files) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
    csv.open(out_dir / "metrics.csv");
    if (!csv) throw IoError("cannot write '" + (out_dir / "metrics.csv").string() + "'");
    csv << MetricsHeader();
    WriteText(out_dir / "config.ini", cfg.ToText());
  }

  Server server(InitNetwork(data.spec, DeriveSeed(cfg.seed, {kInitSalt})),
                cfg.Protocol(data.loss));
  const bool labeled = data.train.classes > 0;

  ExperimentResult result;
  std::vector<double> grad_series;
  double running_min = std::numeric_limits<double>::infinity();
  std::optional<double> last_acc;
  std::string status = "ok";
  nlohmann::json monitors = {{"max_grad_norm_sq", nullptr}, {"max_weight_norm", nullptr}};

  try {
    for (std::size_t t = 1; t <= cfg.rounds; ++t) {
      RoundReport report = server.RunRound(data.clients, cfg.sample, cfg.full_grad);
      if (!std::isfinite(report.loss_mean))
        throw NumericError("non-finite training loss in round " + std::to_string(t));

      monitors["max_grad_norm_sq"] = report.max_grad_norm_sq;
      monitors["max_weight_norm"] = report.max_weight_norm;
      monitors["selection_disagreement"] = report.selection_disagreement;

      MetricRow row;
      row.round = t;
      row.loss = report.loss_mean;
      const double g = report.full_grad_norm_sq.value_or(report.grad_norm_sq);
      grad_series.push_back(g);
      running_min = std::min(running_min, g);
      row.min_grad_norm = running_min;
      row.hh_ratio = report.hh_ratio.empty()
                         ? 0.0
                         : *std::min_element(report.hh_ratio.begin(), report.hh_ratio.end());
      const LedgerTotals totals = server.ledger().Totals();
      row.down_vals = totals.down_vals;
      row.up_vals = totals.up_vals;
      if (labeled && (t % cfg.eval_every == 0 || t == cfg.rounds)) {
        last_acc = Accuracy(server.model(), data.eval);
        row.acc = last_acc;
      }
      row.wall_ms = elapsed_ms();
      if (csv.is_open()) {
        csv << FormatMetricRow(row);
        csv.flush();
      }
      result.rows.push_back(row);
      if (options.keep_reports) result.reports.push_back(std::move(report));
      const std::size_t every = std::max<std::size_t>(1, cfg.rounds / 10);
      if (options.log != nullptr && (t == 1 || t == cfg.rounds || t % every == 0)) {
        *options.log << "round " << t << "/" << cfg.rounds << " loss " << row.loss;
        if (row.acc) *options.log << " acc " << *row.acc;
        *options.log << " min|g|^2 " << row.min_grad_norm << "\n";
      }
    }
  } catch (const NumericError& e) {
    result.exit_code = kExitNumeric;
    result.error = e.what();
    status = "numeric-failure";
  }

  result.final_model = server.model();
  const LedgerTotals totals = server.ledger().Totals();
  nlohmann::json& s = result.summary;
  s["schema_version"] = kSummarySchemaVersion;
  s["status"] = status;
  if (!result.error.empty()) s["error"] = result.error;
  s["mode"] = ToString(cfg.mode);
  s["network"] = data.spec.Describe();
  s["loss_kind"] = ToString(data.loss);
  s["rounds_completed"] = result.rows.size();
  s["final_loss"] = result.rows.empty() ? nlohmann::json(nullptr)
                                        : nlohmann::json(result.rows.back().loss);
  s["final_acc"] = last_acc ? nlohmann::json(*last_acc) : nlohmann::json(nullptr);
  s["final_eval_loss"] = status == "ok" ? nlohmann::json(MeanLoss(server.model(), data.eval,
                                                                   data.loss))
                                        : nlohmann::json(nullptr);
  s["comp_ratio_down"] = totals.CompressionDown();
  s["comp_ratio_up"] = totals.CompressionUp();
  s["ledger"] = LedgerJson(server.ledger());

  if (!grad_series.empty()) {
    const ConvergenceReport conv = MakeConvergenceReport(grad_series);
    s["convergence_slope"] = conv.slope;
    s["min_grad_norm_first"] = conv.running_min.front();
    s["min_grad_norm_final"] = conv.running_min.back();
  } else {
    s["convergence_slope"] = nullptr;
  }

  const bool fc = data.spec.kind == NetworkKind::kFullyConnected;
  if (fc && cfg.mode == Mode::kComfetch && status == "ok" && !data.eval.empty() &&
      server.round() > 0) {
    std::vector<MultiSketch> sketches;
    for (std::size_t l = 0; l < data.spec.num_layers(); ++l)
      sketches.push_back({server.LayerOperators(server.round(), l)});
    s["bound_report"] = BoundJson(PredictionErrorBound(
        server.model(), sketches, data.eval.examples.front().features, cfg.bound_epsilon));
  } else {
    s["bound_report"] = nullptr;
  }

  const auto [d0, n0] = data.spec.LayerShape(0);
  const std::size_t c0 = cfg.identity_hash ? d0 : SketchLength(d0, cfg.sketch_ratio);
  s["theoretical_step_size"] = TheoreticalStepSize(c0, d0, cfg.momentum, 1.0, cfg.rounds);
  s["monitors"] = monitors;
  s["seed"] = cfg.seed;

  if (options.write_files) WriteText(out_dir / "summary.json", s.dump(2) + "\n");
  return result;
}

}  // namespace comfetch
