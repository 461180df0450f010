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

#include "comfetch/protocol.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "comfetch/errors.h"
#include "comfetch/random.h"

namespace comfetch {

namespace {

constexpr std::uint64_t kSampleSalt = 0x53414d504c45ULL;
constexpr std::uint64_t kBatchSalt = 0x4241544348ULL;

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void AddInto(Matrix& acc, const Matrix& g) {
  if (acc.empty()) {
    acc = g;
  } else {
    acc += g;
  }
}

double MaxSquare(const Matrix& m) {
  double top = 0.0;
  for (double v : m.data()) top = std::max(top, v * v);
  return top;
}

}  // namespace

Mode ParseMode(const std::string& name) {
  if (name == "comfetch") return Mode::kComfetch;
  if (name == "uncompressed" || name == "uncompressed-baseline") return Mode::kUncompressed;
  throw ConfigError("mode", "unknown mode '" + name + "' (comfetch | uncompressed-baseline)");
}

std::string ToString(Mode mode) {
  return mode == Mode::kComfetch ? "comfetch" : "uncompressed-baseline";
}

void ProtocolConfig::Validate() const {
  COMFETCH_REQUIRE(sketch_ratio > 0.0 && sketch_ratio <= 1.0, "sketch ratio must lie in (0, 1]");
  COMFETCH_REQUIRE(sketches >= 1, "need at least one sketch");
  COMFETCH_REQUIRE(sketches < 65536, "too many sketches");
  COMFETCH_REQUIRE(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  COMFETCH_REQUIRE(topk_fraction > 0.0 && topk_fraction <= 1.0,
                   "topk fraction must lie in (0, 1]");
  COMFETCH_REQUIRE(std::isfinite(lr) && lr > 0.0, "learning rate must be positive");
  COMFETCH_REQUIRE(workers >= 1, "need at least one worker");
}

std::size_t SketchLength(std::size_t d, double ratio) {
  COMFETCH_REQUIRE(d >= 1, "empty layer");
  const double c = std::round(ratio * static_cast<double>(d));
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(c, 1.0)), 1, d);
}

std::size_t Broadcast::sketches() const {
  if (const auto* m = std::get_if<MultiSketchedNetwork>(&model))
    return m->layers.empty() ? 1 : m->layers.front().ms.k();
  return 1;
}

const NetworkSpec& Broadcast::spec() const {
  return std::visit([](const auto& m) -> const NetworkSpec& { return m.spec; }, model);
}

// --- client side -----------------------------------------------------------------

ClientUpload ClientUpdate(const Broadcast& broadcast, const ClientDataset& data, LossKind loss,
                          std::size_t client_id) {
  COMFETCH_REQUIRE(!data.empty(), "client " + std::to_string(client_id) + " has no examples");
  ClientUpload up;
  up.round = broadcast.round;
  up.client = client_id;
  up.examples = data.size();
  const std::size_t layers = broadcast.spec().num_layers();
  up.layers.resize(layers);

  double loss_sum = 0.0;
  bool first = true;
  for (const Sample& s : data.examples) {
    std::visit(
        Overloaded{
            [&](const NetworkState& net) {
              Gradients g = Backward(net, Forward(net, s.features), s, loss);
              for (std::size_t l = 0; l < layers; ++l) {
                up.layers[l].resize(1);
                AddInto(up.layers[l][0], g.layers[l]);
              }
              AddInto(up.output, g.output);
              loss_sum += g.loss;
            },
            [&](const SketchedNetwork& net) {
              Gradients g = BackwardSketched(net, ForwardSketched(net, s.features), s, loss);
              for (std::size_t l = 0; l < layers; ++l) {
                up.layers[l].resize(1);
                AddInto(up.layers[l][0], g.layers[l]);
              }
              AddInto(up.output, g.output);
              loss_sum += g.loss;
            },
            [&](const MultiSketchedNetwork& net) {
              const ForwardTape tape = ForwardMultiSketched(net, s.features);
              MultiGradients g = BackwardMultiSketched(net, tape, s, loss);
              for (std::size_t l = 0; l < layers; ++l) {
                up.layers[l].resize(g.layers[l].size());
                for (std::size_t j = 0; j < g.layers[l].size(); ++j)
                  AddInto(up.layers[l][j], g.layers[l][j]);
              }
              AddInto(up.output, g.output);
              loss_sum += g.loss;
              if (first) {
                for (const MedianSelection& sel : tape.selections)
                  up.selection.insert(up.selection.end(), sel.lower.begin(), sel.lower.end());
              }
            }},
        broadcast.model);
    first = false;
  }

  if (data.size() > 1) {
    const double n = static_cast<double>(data.size());
    for (auto& per_sketch : up.layers)
      for (Matrix& g : per_sketch)
        for (double& v : g.data()) v /= n;
    for (double& v : up.output.data()) v /= n;
  }
  up.loss = loss_sum / static_cast<double>(data.size());
  return up;
}

// --- server side -----------------------------------------------------------------

AggregatedGradient Aggregate(const Broadcast& broadcast, std::span<const ClientUpload> uploads,
                             bool weighted) {
  COMFETCH_REQUIRE(!uploads.empty(), "no uploads to aggregate");
  const std::size_t layers = broadcast.spec().num_layers();
  const std::size_t k = broadcast.sketches();
  double total_weight = 0.0;
  for (const ClientUpload& u : uploads) {
    COMFETCH_REQUIRE(u.round == broadcast.round,
                     "upload from client " + std::to_string(u.client) + " belongs to round " +
                         std::to_string(u.round) + ", aggregating round " +
                         std::to_string(broadcast.round));
    COMFETCH_REQUIRE(u.layers.size() == layers, "upload has the wrong layer count");
    for (const auto& per_sketch : u.layers)
      COMFETCH_REQUIRE(per_sketch.size() == k, "upload carries " +
                                                   std::to_string(per_sketch.size()) +
                                                   " sketches, server used " + std::to_string(k));
    total_weight += weighted ? static_cast<double>(u.examples) : 1.0;
  }

  auto weight_of = [&](const ClientUpload& u) {
    return weighted ? static_cast<double>(u.examples) : 1.0;
  };

  AggregatedGradient out;
  out.layers.resize(layers);
  for (const ClientUpload& u : uploads) {
    const double w = weight_of(u);
    for (std::size_t l = 0; l < layers; ++l) {
      std::visit(Overloaded{[&](const NetworkState&) {
                              AddInto(out.layers[l], w == 1.0 ? u.layers[l][0]
                                                              : w * u.layers[l][0]);
                            },
                            [&](const SketchedNetwork&) {
                              // Still c×n here; Hᵀ is applied once below.
                              AddInto(out.layers[l], w == 1.0 ? u.layers[l][0]
                                                              : w * u.layers[l][0]);
                            },
                            [&](const MultiSketchedNetwork& net) {
                              const MultiSketch& ms = net.layers[l].ms;
                              Matrix recovered = UnsketchMatrix(ms.ops[0], u.layers[l][0]);
                              for (std::size_t j = 1; j < k; ++j)
                                recovered += UnsketchMatrix(ms.ops[j], u.layers[l][j]);
                              if (w != 1.0) recovered *= w;
                              AddInto(out.layers[l], recovered);
                            }},
                 broadcast.model);
    }
    AddInto(out.output, w == 1.0 ? u.output : w * u.output);
  }

  if (const auto* net = std::get_if<SketchedNetwork>(&broadcast.model)) {
    for (std::size_t l = 0; l < layers; ++l)
      out.layers[l] = UnsketchMatrix(net->layers[l].op, out.layers[l]);
  }
  if (total_weight != 1.0) {
    for (Matrix& g : out.layers)
      for (double& v : g.data()) v /= total_weight;
    for (double& v : out.output.data()) v /= total_weight;
  }
  return out;
}

double SelectionDisagreement(std::span<const ClientUpload> uploads) {
  if (uploads.size() < 2) return 0.0;
  const std::size_t n = uploads.front().selection.size();
  if (n == 0) return 0.0;
  std::size_t differ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint16_t ref = uploads.front().selection[i];
    for (const ClientUpload& u : uploads.subspan(1)) {
      COMFETCH_REQUIRE(u.selection.size() == n, "selection length mismatch");
      if (u.selection[i] != ref) {
        ++differ;
        break;
      }
    }
  }
  return static_cast<double>(differ) / static_cast<double>(n);
}

Server::Server(NetworkState init, ProtocolConfig config)
    : model_(std::move(init)), config_(config) {
  config_.Validate();
  model_.spec.Validate();
  CheckShapes(model_);
  opt_ = ServerOptState::Zeros(model_.weights, config_.lr, config_.momentum,
                               config_.topk_fraction);
  max_weight_norm_.assign(model_.weights.size(), 0.0);
}

std::vector<std::size_t> Server::SampleClients(std::size_t round, std::size_t total,
                                               std::size_t n) const {
  COMFETCH_REQUIRE(n >= 1 && n <= total, "cannot sample " + std::to_string(n) + " of " +
                                             std::to_string(total) + " clients");
  std::vector<std::size_t> ids(total);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(DeriveSeed(config_.root_seed, {kSampleSalt, round}));
  rng.Shuffle(ids.begin(), ids.end());
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ClientDataset Server::LocalBatch(const ClientDataset& data, std::size_t round,
                                std::size_t id) const {
  if (config_.batch == 0 || data.size() <= config_.batch) return data;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(DeriveSeed(config_.root_seed, {kBatchSalt, round, id}));
  // Partial Fisher-Yates: the first `batch` slots are a uniform draw.
  for (std::size_t i = 0; i < config_.batch; ++i)
    std::swap(idx[i], idx[i + rng.Index(idx.size() - i)]);
  idx.resize(config_.batch);
  std::sort(idx.begin(), idx.end());
  ClientDataset out;
  out.tag = data.tag;
  out.examples.reserve(idx.size());
  for (std::size_t i : idx) out.examples.push_back(data.examples[i]);
  return out;
}

std::vector<SketchOperator> Server::LayerOperators(std::size_t round, std::size_t layer) const {
  const std::size_t d = model_.spec.LayerShape(layer).first;
  std::vector<SketchOperator> ops;
  ops.reserve(config_.sketches);
  for (std::size_t j = 0; j < config_.sketches; ++j) {
    if (config_.identity_hash) {
      ops.push_back(SketchOperator::Identity(d));
    } else {
      ops.emplace_back(d, SketchLength(d, config_.sketch_ratio),
                       DeriveSeed(config_.root_seed, {round, layer, j}));
    }
  }
  return ops;
}

Broadcast Server::MakeBroadcast(std::size_t round) const {
  Broadcast b;
  b.round = round;
  const std::size_t layers = model_.weights.size();
  if (config_.mode == Mode::kUncompressed) {
    b.model = model_;
  } else if (config_.sketches == 1 && !config_.force_multi_sketch) {
    std::vector<SketchOperator> ops;
    for (std::size_t l = 0; l < layers; ++l) ops.push_back(LayerOperators(round, l).front());
    b.model = SketchNetwork(model_, std::move(ops));
  } else {
    std::vector<MultiSketch> sketches;
    for (std::size_t l = 0; l < layers; ++l) sketches.push_back({LayerOperators(round, l)});
    b.model = SketchNetworkMulti(model_, std::move(sketches));
  }
  return b;
}

void Server::ChargeBroadcast(const Broadcast& b) {
  ledger_.CountClient();
  const NetworkSpec& spec = model_.spec;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto [d, n] = spec.LayerShape(l);
    const std::uint64_t dense = static_cast<std::uint64_t>(d) * n;
    std::uint64_t vals = 0;
    std::uint64_t bytes = 0;
    std::visit(Overloaded{[&](const NetworkState&) {
                            vals = dense;
                            bytes = 4 * dense;
                          },
                          [&](const SketchedNetwork& net) {
                            const std::size_t c = net.layers[l].op.sketch_dim();
                            vals = static_cast<std::uint64_t>(c) * n + d;
                            bytes = WireBytes(c, n);
                          },
                          [&](const MultiSketchedNetwork& net) {
                            for (const SketchOperator& op : net.layers[l].ms.ops) {
                              vals += static_cast<std::uint64_t>(op.sketch_dim()) * n + d;
                              bytes += WireBytes(op.sketch_dim(), n);
                            }
                          }},
               b.model);
    ledger_.ChargeDownlink(l, vals, bytes, dense);
  }
  ledger_.ChargeOutput(model_.output.size());
}

void Server::ChargeUpload(const ClientUpload& u) {
  for (std::size_t l = 0; l < u.layers.size(); ++l) {
    std::uint64_t vals = 0;
    for (const Matrix& g : u.layers[l]) vals += g.size();
    ledger_.ChargeUplink(l, vals, 4 * vals);
  }
}

std::vector<ClientUpload> Server::RunClients(const Broadcast& b,
                                             std::span<const ClientDataset> clients,
                                             const std::vector<std::size_t>& ids) const {
  std::vector<ClientUpload> uploads(ids.size());
  const std::size_t workers = std::min(config_.workers, ids.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      uploads[i] = ClientUpdate(b, LocalBatch(clients[ids[i]], b.round, ids[i]), config_.loss,
                                ids[i]);
    return uploads;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < ids.size(); i += workers)
          uploads[i] = ClientUpdate(b, LocalBatch(clients[ids[i]], b.round, ids[i]),
                                    config_.loss, ids[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return uploads;
}

RoundReport Server::RunRound(std::span<const ClientDataset> clients, std::size_t n,
                             bool full_data) {
  const std::size_t t = round_ + 1;
  RoundReport report;
  report.round = t;
  report.clients = SampleClients(t, clients.size(), n);

  const Broadcast b = MakeBroadcast(t);
  ledger_.BeginRound(t, model_.weights.size());
  try {
    for (std::size_t i = 0; i < report.clients.size(); ++i) ChargeBroadcast(b);
    const std::vector<ClientUpload> uploads = RunClients(b, clients, report.clients);
    for (const ClientUpload& u : uploads) ChargeUpload(u);

    AggregatedGradient g = Aggregate(b, uploads, config_.weighted_aggregation);
    if (!AllFinite(g.output.data())) throw NumericError("non-finite output-layer gradient");

    for (const ClientUpload& u : uploads) {
      report.loss_mean += u.loss;
      report.loss_max = std::max(report.loss_max, u.loss);
    }
    report.loss_mean /= static_cast<double>(uploads.size());
    report.selection_disagreement = SelectionDisagreement(uploads);

    if (full_data) {
      ClientDataset all;
      for (const ClientDataset& c : clients)
        all.examples.insert(all.examples.end(), c.examples.begin(), c.examples.end());
      const ClientUpload whole = ClientUpdate(b, all, config_.loss, clients.size());
      const AggregatedGradient fg = Aggregate(b, std::span(&whole, 1));
      double sq = 0.0;
      for (const Matrix& m : fg.layers) sq += SquaredNorm(m.data());
      report.full_grad_norm_sq = sq;
    }

    std::vector<double> weight_norms;
    for (const Matrix& w : model_.weights) {
      const double top = MaxSquare(w);
      const double norm_sq = SquaredNorm(w.data());
      report.weight_hh_ratio.push_back(top == 0.0 ? 0.0 : norm_sq / top);
      weight_norms.push_back(std::sqrt(norm_sq));
    }

    EfStepDiagnostics diag;
    EfTopkStep(opt_, model_.weights, g.layers, &diag);
    report.hh_ratio = diag.hh_ratio;
    for (std::size_t l = 0; l < weight_norms.size(); ++l)
      max_weight_norm_[l] = std::max(max_weight_norm_[l], weight_norms[l]);
    if (config_.train_output) {
      auto& a = model_.output.data();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] -= config_.lr * g.output.data()[i];
    }

    for (const Matrix& m : g.layers) {
      const double sq = SquaredNorm(m.data());
      report.grad_norms.push_back(std::sqrt(sq));
      report.grad_norm_sq += sq;
    }
    report.output_grad_norm = FrobeniusNorm(g.output);
    max_grad_norm_sq_ = std::max(max_grad_norm_sq_, report.grad_norm_sq);
    report.max_grad_norm_sq = max_grad_norm_sq_;
    report.max_weight_norm = max_weight_norm_;
    report.traffic = ledger_.current();
    last_gradient_ = std::move(g);
  } catch (...) {
    ledger_.AbandonRound();
    throw;
  }
  round_ = t;
  return report;
}

}  // namespace comfetch
