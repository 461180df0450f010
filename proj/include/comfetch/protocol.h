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
// One federated round: sample clients, broadcast sketched weights, collect
// gradients with respect to the sketches, average, recover with Hᵀ and take
// an error-feedback Top-k step on the server.

#ifndef COMFETCH_PROTOCOL_H_
#define COMFETCH_PROTOCOL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "comfetch/dataset.h"
#include "comfetch/ledger.h"
#include "comfetch/model.h"
#include "comfetch/network.h"
#include "comfetch/server_opt.h"

namespace comfetch {

enum class Mode { kComfetch, kUncompressed };

Mode ParseMode(const std::string& name);
std::string ToString(Mode mode);

struct ProtocolConfig {
  Mode mode = Mode::kComfetch;
  /// c = round(ratio·d), clamped to [1, d].
  double sketch_ratio = 0.5;
  /// Sketches per layer (k). 1 is plain Comfetch.
  std::size_t sketches = 1;
  /// Use h(j) = j, s(j) = +1 (c = d). Degeneracy checks only.
  bool identity_hash = false;
  /// Send k = 1 through the multi-sketch code path.
  bool force_multi_sketch = false;
  LossKind loss = LossKind::kSoftmaxCrossEntropy;

  double lr = 0.001;
  double momentum = 0.0;
  double topk_fraction = 0.10;
  /// Train the dense output layer with plain SGD at `lr`; otherwise it stays
  /// at its initial value.
  bool train_output = true;
  /// Weight client uploads by their example counts instead of 1/N.
  bool weighted_aggregation = false;

  /// Examples each sampled client draws per round (without replacement);
  /// 0 uses the whole local dataset.
  std::size_t batch = 0;

  std::size_t workers = 1;
  std::uint64_t root_seed = 0;

  void Validate() const;
};

std::size_t SketchLength(std::size_t d, double ratio);

/// What the server sends out in one round. Exactly one alternative is set,
/// depending on the mode and sketch count.
struct Broadcast {
  std::size_t round = 0;
  std::variant<NetworkState, SketchedNetwork, MultiSketchedNetwork> model;

  std::size_t sketches() const;
  const NetworkSpec& spec() const;
};

struct ClientUpload {
  std::size_t round = 0;
  std::size_t client = 0;
  std::size_t examples = 0;
  /// layers[ℓ][j]: averaged gradient for sketch j of layer ℓ. Dense mode and
  /// single-sketch mode have one entry per layer.
  std::vector<std::vector<Matrix>> layers;
  Matrix output;
  double loss = 0.0;
  /// Median choice of the first example, flattened over all layers (multi-
  /// sketch only).
  std::vector<std::uint16_t> selection;
};

/// Full-batch gradient over `data`, averaged over examples.
ClientUpload ClientUpdate(const Broadcast& broadcast, const ClientDataset& data, LossKind loss,
                          std::size_t client_id);

struct AggregatedGradient {
  /// d×n per layer.
  std::vector<Matrix> layers;
  Matrix output;
};

/// Single sketch: Hᵀ·(Σ g_i)/N. Multi-sketch: (1/N)·Σ_i Σ_j H_jᵀ g_ij.
/// Dense: (Σ g_i)/N. Rejects uploads from another round or with the wrong
/// sketch count.
AggregatedGradient Aggregate(const Broadcast& broadcast, std::span<const ClientUpload> uploads,
                             bool weighted = false);

/// Fraction of selection coordinates where not every client chose the same
/// sketch. 0 for fewer than two uploads or no selections.
double SelectionDisagreement(std::span<const ClientUpload> uploads);

struct RoundReport {
  std::size_t round = 0;
  std::vector<std::size_t> clients;
  /// ‖g_t^ℓ‖ per hidden layer, after aggregation.
  std::vector<double> grad_norms;
  /// Σ_ℓ ‖g_t^ℓ‖².
  double grad_norm_sq = 0.0;
  double output_grad_norm = 0.0;
  double loss_mean = 0.0;
  double loss_max = 0.0;
  /// max_i z_i²/‖z‖² per layer.
  std::vector<double> hh_ratio;
  /// ‖W‖²/max_i W_i² per layer, compared against the sketch length.
  std::vector<double> weight_hh_ratio;
  /// Running maxima since round 1.
  double max_grad_norm_sq = 0.0;
  std::vector<double> max_weight_norm;
  RoundTraffic traffic;
  double selection_disagreement = 0.0;
  /// ‖∇_W f‖² over all client data at this round's sketch, when requested.
  std::optional<double> full_grad_norm_sq;
};

class Server {
 public:
  Server(NetworkState init, ProtocolConfig config);

  const NetworkState& model() const { return model_; }
  NetworkState& mutable_model() { return model_; }
  const ServerOptState& optimizer() const { return opt_; }
  const CommLedger& ledger() const { return ledger_; }
  const ProtocolConfig& config() const { return config_; }
  /// Number of completed rounds.
  std::size_t round() const { return round_; }
  const AggregatedGradient& last_gradient() const { return last_gradient_; }

  /// Sorted ids of the N clients sampled in `round` (1-based).
  std::vector<std::size_t> SampleClients(std::size_t round, std::size_t total,
                                         std::size_t n) const;
  /// The examples client `id` trains on in `round`.
  ClientDataset LocalBatch(const ClientDataset& data, std::size_t round, std::size_t id) const;
  /// Operators for layer `layer` in `round`, one per sketch.
  std::vector<SketchOperator> LayerOperators(std::size_t round, std::size_t layer) const;
  /// The model as broadcast in `round`; charges nothing.
  Broadcast MakeBroadcast(std::size_t round) const;

  /// Runs round round()+1 and advances. With `full_data` set, also reports
  /// the gradient norm of the objective over the union of all clients.
  RoundReport RunRound(std::span<const ClientDataset> clients, std::size_t n,
                       bool full_data = false);

 private:
  void ChargeBroadcast(const Broadcast& b);
  void ChargeUpload(const ClientUpload& u);
  std::vector<ClientUpload> RunClients(const Broadcast& b, std::span<const ClientDataset> clients,
                                       const std::vector<std::size_t>& ids) const;

  NetworkState model_;
  ProtocolConfig config_;
  ServerOptState opt_;
  CommLedger ledger_;
  std::size_t round_ = 0;
  AggregatedGradient last_gradient_;
  double max_grad_norm_sq_ = 0.0;
  std::vector<double> max_weight_norm_;
};

}  // namespace comfetch

#endif  // COMFETCH_PROTOCOL_H_
