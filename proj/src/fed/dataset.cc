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

#include "comfetch/dataset.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "comfetch/errors.h"
#include "comfetch/random.h"

namespace comfetch {

std::size_t ClientDataset::DistinctLabels() const {
  std::set<int> labels;
  for (const Sample& s : examples)
    if (s.label >= 0) labels.insert(s.label);
  return labels.size();
}

PartitionStrategy ParsePartitionStrategy(const std::string& name) {
  if (name == "iid") return PartitionStrategy::kIid;
  if (name == "label-shard") return PartitionStrategy::kLabelShard;
  if (name == "single-point") return PartitionStrategy::kSinglePoint;
  throw ContractViolation("unknown partition strategy '" + name + "'");
}

std::string ToString(PartitionStrategy strategy) {
  switch (strategy) {
    case PartitionStrategy::kIid: return "iid";
    case PartitionStrategy::kLabelShard: return "label-shard";
    case PartitionStrategy::kSinglePoint: return "single-point";
  }
  return "?";
}

namespace {

ClientDataset Gather(const ClientDataset& data, std::span<const std::size_t> idx,
                     std::size_t client) {
  ClientDataset out;
  out.tag = data.tag + "/client" + std::to_string(client);
  out.examples.reserve(idx.size());
  for (std::size_t i : idx) out.examples.push_back(data.examples[i]);
  return out;
}

// Chunk boundaries splitting n items into `parts` near-equal runs.
std::size_t ChunkStart(std::size_t n, std::size_t parts, std::size_t i) { return n * i / parts; }

}  // namespace

std::vector<ClientDataset> Partition(const ClientDataset& data, std::size_t clients,
                                     PartitionStrategy strategy, std::uint64_t seed) {
  COMFETCH_REQUIRE(clients >= 1, "need at least one client");
  const std::size_t n = data.size();
  Rng rng(seed);
  std::vector<ClientDataset> out;
  out.reserve(clients);

  switch (strategy) {
    case PartitionStrategy::kIid:
    case PartitionStrategy::kSinglePoint: {
      const bool single = strategy == PartitionStrategy::kSinglePoint;
      COMFETCH_REQUIRE(n >= clients, "need at least " + std::to_string(clients) +
                                         " examples, have " + std::to_string(n) +
                                         " (short by " + std::to_string(clients - n) + ")");
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.Shuffle(order.begin(), order.end());
      for (std::size_t c = 0; c < clients; ++c) {
        const std::size_t lo = single ? c : ChunkStart(n, clients, c);
        const std::size_t hi = single ? c + 1 : ChunkStart(n, clients, c + 1);
        out.push_back(Gather(data, std::span(order).subspan(lo, hi - lo), c));
      }
      return out;
    }
    case PartitionStrategy::kLabelShard: {
      std::map<int, std::vector<std::size_t>> by_label;
      for (std::size_t i = 0; i < n; ++i) {
        COMFETCH_REQUIRE(data.examples[i].label >= 0,
                         "label-shard needs labels; example " + std::to_string(i) + " has none");
        by_label[data.examples[i].label].push_back(i);
      }
      const std::size_t labels = by_label.size();
      const std::size_t slots = 2 * clients;
      COMFETCH_REQUIRE(labels >= 1, "no examples");
      COMFETCH_REQUIRE(slots >= labels, std::to_string(labels) + " labels need at least " +
                                            std::to_string((labels + 1) / 2) + " clients, have " +
                                            std::to_string(clients));
      std::vector<int> label_order;
      for (auto& [label, idx] : by_label) {
        label_order.push_back(label);
        rng.Shuffle(idx.begin(), idx.end());
      }
      rng.Shuffle(label_order.begin(), label_order.end());
      // Slot s holds label label_order[s % labels]; client c owns slots 2c, 2c+1.
      std::map<int, std::size_t> shares;
      for (std::size_t s = 0; s < slots; ++s) ++shares[label_order[s % labels]];
      std::map<int, std::size_t> taken;
      std::vector<std::vector<std::size_t>> per_client(clients);
      for (std::size_t s = 0; s < slots; ++s) {
        const int label = label_order[s % labels];
        const auto& idx = by_label[label];
        const std::size_t part = taken[label]++;
        const std::size_t lo = ChunkStart(idx.size(), shares[label], part);
        const std::size_t hi = ChunkStart(idx.size(), shares[label], part + 1);
        auto& dst = per_client[s / 2];
        dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(lo),
                   idx.begin() + static_cast<std::ptrdiff_t>(hi));
      }
      for (std::size_t c = 0; c < clients; ++c) {
        COMFETCH_REQUIRE(!per_client[c].empty(),
                         "client " + std::to_string(c) + " received no examples; " +
                             "too few examples per label for " + std::to_string(clients) +
                             " clients");
        out.push_back(Gather(data, per_client[c], c));
      }
      return out;
    }
  }
  throw ContractViolation("unknown partition strategy");
}

}  // namespace comfetch
