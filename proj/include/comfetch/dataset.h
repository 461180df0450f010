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

#ifndef COMFETCH_DATASET_H_
#define COMFETCH_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "comfetch/model.h"

namespace comfetch {

struct ClientDataset {
  std::vector<Sample> examples;
  std::string tag;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  /// Number of distinct labels; unlabeled examples are ignored.
  std::size_t DistinctLabels() const;
};

enum class PartitionStrategy {
  kIid,         // shuffled, near-equal contiguous chunks
  kLabelShard,  // every client holds at most two label groups
  kSinglePoint  // every client holds exactly one example
};

PartitionStrategy ParsePartitionStrategy(const std::string& name);
std::string ToString(PartitionStrategy strategy);

/// Splits `data` across `clients` clients.
///
/// kIid and kLabelShard return a disjoint cover of the input. kLabelShard
/// needs labels and 2·clients >= #labels. kSinglePoint needs at least
/// `clients` examples; when there are more, the surplus (after a seeded
/// shuffle) is left unassigned. Shortfalls raise ContractViolation.
std::vector<ClientDataset> Partition(const ClientDataset& data, std::size_t clients,
                                     PartitionStrategy strategy, std::uint64_t seed);

}  // namespace comfetch

#endif  // COMFETCH_DATASET_H_
