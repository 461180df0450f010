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

#include "comfetch/ledger.h"

#include <string>

#include "comfetch/errors.h"

namespace comfetch {

namespace {

template <typename F>
std::uint64_t SumLayers(const std::vector<LayerTraffic>& layers, F field) {
  std::uint64_t total = 0;
  for (const LayerTraffic& l : layers) total += field(l);
  return total;
}

}  // namespace

std::uint64_t RoundTraffic::DownVals() const {
  return SumLayers(layers, [](const LayerTraffic& l) { return l.down_vals; });
}
std::uint64_t RoundTraffic::UpVals() const {
  return SumLayers(layers, [](const LayerTraffic& l) { return l.up_vals; });
}
std::uint64_t RoundTraffic::DownBytes() const {
  return SumLayers(layers, [](const LayerTraffic& l) { return l.down_bytes; });
}
std::uint64_t RoundTraffic::UpBytes() const {
  return SumLayers(layers, [](const LayerTraffic& l) { return l.up_bytes; });
}
std::uint64_t RoundTraffic::BaselineVals() const {
  return SumLayers(layers, [](const LayerTraffic& l) { return l.baseline_vals; });
}

double LedgerTotals::CompressionDown() const {
  return down_vals == 0 ? 0.0
                        : static_cast<double>(baseline_down_vals) / static_cast<double>(down_vals);
}

double LedgerTotals::CompressionUp() const {
  return up_vals == 0 ? 0.0
                      : static_cast<double>(baseline_up_vals) / static_cast<double>(up_vals);
}

RoundTraffic& CommLedger::BeginRound(std::size_t round, std::size_t layers) {
  RoundTraffic r;
  r.round = round;
  r.layers.resize(layers);
  rounds_.push_back(std::move(r));
  return rounds_.back();
}

RoundTraffic& CommLedger::Open() {
  COMFETCH_REQUIRE(!rounds_.empty(), "no round open");
  return rounds_.back();
}

const RoundTraffic& CommLedger::current() const {
  COMFETCH_REQUIRE(!rounds_.empty(), "no round open");
  return rounds_.back();
}

void CommLedger::ChargeDownlink(std::size_t layer, std::uint64_t vals, std::uint64_t bytes,
                                std::uint64_t baseline_vals) {
  RoundTraffic& r = Open();
  COMFETCH_REQUIRE(layer < r.layers.size(), "layer " + std::to_string(layer) + " out of range");
  r.layers[layer].down_vals += vals;
  r.layers[layer].down_bytes += bytes;
  r.layers[layer].baseline_vals += baseline_vals;
}

void CommLedger::ChargeUplink(std::size_t layer, std::uint64_t vals, std::uint64_t bytes) {
  RoundTraffic& r = Open();
  COMFETCH_REQUIRE(layer < r.layers.size(), "layer " + std::to_string(layer) + " out of range");
  r.layers[layer].up_vals += vals;
  r.layers[layer].up_bytes += bytes;
}

void CommLedger::ChargeOutput(std::uint64_t vals) { Open().output_vals += vals; }

void CommLedger::CountClient() { ++Open().clients; }

void CommLedger::AbandonRound() {
  Open();
  rounds_.pop_back();
}

LedgerTotals CommLedger::Totals() const {
  LedgerTotals t;
  for (const RoundTraffic& r : rounds_) {
    t.down_vals += r.DownVals();
    t.up_vals += r.UpVals();
    t.down_bytes += r.DownBytes();
    t.up_bytes += r.UpBytes();
    t.baseline_down_vals += r.BaselineVals();
    t.baseline_up_vals += r.BaselineVals();
    t.output_vals += r.output_vals;
  }
  return t;
}

}  // namespace comfetch
