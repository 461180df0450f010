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

#ifndef COMFETCH_EXPERIMENT_H_
#define COMFETCH_EXPERIMENT_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "comfetch/config.h"
#include "comfetch/data_io.h"
#include "comfetch/protocol.h"

namespace comfetch {

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr int kSummarySchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

/// Children of the root seed used by the experiment runner.
inline constexpr std::uint64_t kHoldoutSalt = 0x484f4c44ULL;
inline constexpr std::uint64_t kPartitionSalt = 0x50415254ULL;
inline constexpr std::uint64_t kInitSalt = 0x494e4954ULL;

struct MetricRow {
  std::size_t round = 0;
  double loss = 0.0;
  std::optional<double> acc;
  /// Running minimum of the squared gradient norm.
  double min_grad_norm = 0.0;
  /// Smallest per-layer heavy-hitter ratio of z_t.
  double hh_ratio = 0.0;
  std::uint64_t down_vals = 0;
  std::uint64_t up_vals = 0;
  double wall_ms = 0.0;
};

struct ExperimentData {
  LoadedDataset train;
  /// Evaluation split: the test source, a holdout, or the training data.
  ClientDataset eval;
  std::vector<ClientDataset> clients;
  NetworkSpec spec;
  LossKind loss = LossKind::kSquaredError;
};

/// Loads and partitions everything a run needs; checks that the network
/// matches the data.
ExperimentData PrepareExperiment(const ExperimentConfig& cfg);

struct RunOptions {
  bool write_files = true;
  bool keep_reports = false;
  /// Progress lines go here when set.
  std::ostream* log = nullptr;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<RoundReport> reports;
  nlohmann::json summary;
  NetworkState final_model;
  int exit_code = kExitOk;
  std::string error;
};

/// Runs cfg.rounds rounds. A numeric blow-up stops the run with exit code 3;
/// rows recorded so far are kept and, with write_files, flushed.
ExperimentResult RunExperiment(const ExperimentConfig& cfg, const RunOptions& options = {});
ExperimentResult RunExperiment(const ExperimentConfig& cfg, const ExperimentData& data,
                               const RunOptions& options = {});

/// Fraction of examples whose argmax prediction matches the label.
double Accuracy(const NetworkState& net, const ClientDataset& data);
double MeanLoss(const NetworkState& net, const ClientDataset& data, LossKind loss);

std::string MetricsHeader();
/// CSV body line; wall-clock omitted (left empty) when `with_wall` is false.
std::string FormatMetricRow(const MetricRow& row, bool with_wall = true);
std::string MetricsCsv(const std::vector<MetricRow>& rows, bool with_wall = true);

}  // namespace comfetch

#endif  // COMFETCH_EXPERIMENT_H_
