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
// Communication accounting. Two quantities are kept side by side: the value
// count of the cost model (a sketched d×n layer costs c·n + d values down,
// the hash vector plus the payload, and c·n values up) and the bytes of the
// actual wire format. The dense output layer is tracked on its own line so
// that compression ratios cover the sketched layers only.

#ifndef COMFETCH_LEDGER_H_
#define COMFETCH_LEDGER_H_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace comfetch {

struct LayerTraffic {
  std::uint64_t down_vals = 0;
  std::uint64_t up_vals = 0;
  std::uint64_t down_bytes = 0;
  std::uint64_t up_bytes = 0;
  /// What an uncompressed exchange would have cost, per direction.
  std::uint64_t baseline_vals = 0;
};

struct RoundTraffic {
  std::size_t round = 0;
  std::size_t clients = 0;
  std::vector<LayerTraffic> layers;
  /// Dense output layer, per direction.
  std::uint64_t output_vals = 0;

  std::uint64_t DownVals() const;
  std::uint64_t UpVals() const;
  std::uint64_t DownBytes() const;
  std::uint64_t UpBytes() const;
  std::uint64_t BaselineVals() const;
};

struct LedgerTotals {
  std::uint64_t down_vals = 0;
  std::uint64_t up_vals = 0;
  std::uint64_t down_bytes = 0;
  std::uint64_t up_bytes = 0;
  std::uint64_t baseline_down_vals = 0;
  std::uint64_t baseline_up_vals = 0;
  std::uint64_t output_vals = 0;

  /// baseline / actual; 0 when nothing was sent.
  double CompressionDown() const;
  double CompressionUp() const;
};

class CommLedger {
 public:
  /// Opens a record for `round` with `layers` zeroed layer slots.
  RoundTraffic& BeginRound(std::size_t round, std::size_t layers);

  void ChargeDownlink(std::size_t layer, std::uint64_t vals, std::uint64_t bytes,
                      std::uint64_t baseline_vals);
  void ChargeUplink(std::size_t layer, std::uint64_t vals, std::uint64_t bytes);
  void ChargeOutput(std::uint64_t vals);
  void CountClient();
  /// Removes the most recent record (used when a round is rejected).
  void AbandonRound();

  const std::vector<RoundTraffic>& rounds() const { return rounds_; }
  const RoundTraffic& current() const;
  LedgerTotals Totals() const;

 private:
  RoundTraffic& Open();
  std::vector<RoundTraffic> rounds_;
};

}  // namespace comfetch

#endif  // COMFETCH_LEDGER_H_
