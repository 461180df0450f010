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

#include "comfetch/server_opt.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "comfetch/errors.h"

namespace comfetch {

ServerOptState ServerOptState::Zeros(const std::vector<Matrix>& weights, double lr,
                                     double momentum, double topk_fraction) {
  COMFETCH_REQUIRE(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  COMFETCH_REQUIRE(topk_fraction > 0.0 && topk_fraction <= 1.0,
                   "topk fraction must lie in (0, 1]");
  ServerOptState s;
  s.lr = lr;
  s.momentum = momentum;
  s.topk_fraction = topk_fraction;
  for (const Matrix& w : weights) {
    s.error.emplace_back(w.rows(), w.cols());
    s.velocity.emplace_back(w.rows(), w.cols());
  }
  return s;
}

SparseUpdate TopK(std::span<const double> z, std::size_t k) {
  COMFETCH_REQUIRE(k >= 1 && k <= z.size(), "k=" + std::to_string(k) +
                                                " outside [1, " + std::to_string(z.size()) + "]");
  std::vector<std::size_t> idx(z.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto larger = [&](std::size_t a, std::size_t b) {
    const double fa = std::abs(z[a]);
    const double fb = std::abs(z[b]);
    return fa > fb || (fa == fb && a < b);
  };
  if (k < z.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(),
                     larger);
    idx.resize(k);
  }
  std::sort(idx.begin(), idx.end());
  SparseUpdate out;
  out.indices = std::move(idx);
  out.values.reserve(k);
  for (std::size_t i : out.indices) out.values.push_back(z[i]);
  return out;
}

std::size_t TopKBudget(std::size_t len, double fraction) {
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(len) - 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(len, 1));
}

double HeavyHitterRatio(std::span<const double> z) {
  const double total = SquaredNorm(z);
  if (total == 0.0) return 0.0;
  double top = 0.0;
  for (double v : z) top = std::max(top, v * v);
  return top / total;
}

std::vector<Matrix> EfTopkStep(ServerOptState& state, std::vector<Matrix>& weights,
                               const std::vector<Matrix>& grads,
                               EfStepDiagnostics* diagnostics) {
  COMFETCH_REQUIRE(grads.size() == weights.size() && state.error.size() == weights.size() &&
                       state.velocity.size() == weights.size(),
                   "layer count mismatch");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    COMFETCH_REQUIRE(grads[l].SameShape(weights[l]) && state.error[l].SameShape(weights[l]) &&
                         state.velocity[l].SameShape(weights[l]),
                     "layer " + std::to_string(l) + " shape mismatch");
    if (!AllFinite(grads[l].data()))
      throw NumericError("non-finite gradient in layer " + std::to_string(l) +
                         "; round rejected");
  }

  if (diagnostics != nullptr) diagnostics->hh_ratio.assign(grads.size(), 0.0);
  std::vector<Matrix> deltas;
  deltas.reserve(grads.size());
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& u = state.velocity[l].data();
    auto& e = state.error[l].data();
    const auto& g = grads[l].data();
    std::vector<double> z(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      u[i] = state.momentum * u[i] + g[i];
      z[i] = state.lr * u[i] + e[i];
    }
    if (diagnostics != nullptr) diagnostics->hh_ratio[l] = HeavyHitterRatio(z);

    Matrix delta(weights[l].rows(), weights[l].cols());
    const SparseUpdate kept = TopK(z, TopKBudget(z.size(), state.topk_fraction));
    for (std::size_t i = 0; i < kept.indices.size(); ++i)
      delta.data()[kept.indices[i]] = kept.values[i];
    auto& w = weights[l].data();
    for (std::size_t i = 0; i < z.size(); ++i) {
      e[i] = z[i] - delta.data()[i];
      w[i] -= delta.data()[i];
    }
    deltas.push_back(std::move(delta));
  }
  return deltas;
}

}  // namespace comfetch
