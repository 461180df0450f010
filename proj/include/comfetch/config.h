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
// Experiment configuration: flat `key = value` text, `#` or `;` comments.
// Unknown keys and malformed values raise ConfigError naming the key.

#ifndef COMFETCH_CONFIG_H_
#define COMFETCH_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "comfetch/dataset.h"
#include "comfetch/model.h"
#include "comfetch/network.h"
#include "comfetch/protocol.h"

namespace comfetch {

struct ExperimentConfig {
  std::string network;                  // e.g. "fc:784-64-10"
  std::string dataset;                  // see LoadDataset
  std::string test_dataset;             // optional
  double holdout = 0.0;                 // fraction held out when no test set
  Mode mode = Mode::kComfetch;
  std::optional<LossKind> loss;         // unset: cross-entropy if labeled
  PartitionStrategy partition = PartitionStrategy::kIid;
  std::size_t clients = 10;             // C
  std::size_t sample = 10;              // N
  std::size_t rounds = 100;             // T
  std::size_t batch = 16;               // per-client examples per round, 0 = all
  double lr = 0.001;
  double momentum = 0.9;
  double topk = 0.10;
  double sketch_ratio = 0.5;
  std::size_t sketches = 1;
  bool identity_hash = false;
  bool train_output = true;
  bool weighted = false;
  bool full_grad = false;               // track ‖∇f‖² over all data
  double bound_epsilon = 0.1;
  std::size_t workers = 1;
  std::size_t eval_every = 1;
  std::uint64_t seed = 0;
  std::string out = "comfetch-out";

  void Validate() const;
  /// Key/value listing in the same syntax the parser accepts.
  std::string ToText() const;
  ProtocolConfig Protocol(LossKind resolved_loss) const;
};

/// Parses config text. `origin` is used in error messages.
ExperimentConfig ParseConfig(const std::string& text, const std::string& origin = "<config>");
/// Reads and parses a file; IoError if unreadable.
ExperimentConfig LoadConfig(const std::string& path);
/// Applies one `key = value` assignment to `cfg` (same rules as the file).
void SetConfigValue(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// "fc:n0-d1-...-dL-outputs" or
/// "conv:in=1,m=4,image=3x3,q=4,L=3[,c_sigma=2][,c_res=0.5][,out=1]".
NetworkSpec ParseNetworkSpec(const std::string& text);

LossKind ParseLoss(const std::string& name);
std::string ToString(LossKind loss);

/// Splits "a=1,b=2" into a map; bare items map to "".
std::map<std::string, std::string> ParseKeyList(const std::string& text);

}  // namespace comfetch

#endif  // COMFETCH_CONFIG_H_
