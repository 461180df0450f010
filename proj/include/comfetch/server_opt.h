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
// Server-side error feedback with momentum and Top-k, applied per layer on
// the flattened weight:
//
//   u_t = ρ·u_{t-1} + g_t
//   z_t = η·u_t + e_{t-1}
//   Δ_t = TopK(z_t)
//   e_t = z_t − Δ_t
//   W_{t+1} = W_t − Δ_t

#ifndef COMFETCH_SERVER_OPT_H_
#define COMFETCH_SERVER_OPT_H_

#include <cstddef>
#include <span>
#include <vector>

#include "comfetch/matrix.h"

namespace comfetch {

struct ServerOptState {
  double lr = 0.001;
  double momentum = 0.0;
  /// Fraction of each layer's entries kept by Top-k, in (0, 1].
  double topk_fraction = 0.10;
  std::vector<Matrix> error;
  std::vector<Matrix> velocity;

  /// Zero accumulators shaped like `weights`.
  static ServerOptState Zeros(const std::vector<Matrix>& weights, double lr, double momentum,
                              double topk_fraction);
};

struct SparseUpdate {
  std::vector<std::size_t> indices;  // ascending
  std::vector<double> values;
};

/// The k largest-magnitude entries. Ties go to the lower index. 1 <= k <= len.
SparseUpdate TopK(std::span<const double> z, std::size_t k);

/// ceil(fraction·len) clamped to [1, len].
std::size_t TopKBudget(std::size_t len, double fraction);

/// max_i z_i² / ‖z‖², or 0 for a zero vector.
double HeavyHitterRatio(std::span<const double> z);

struct EfStepDiagnostics {
  /// HeavyHitterRatio(z_t) per layer.
  std::vector<double> hh_ratio;
};

/// One error-feedback step. Mutates `state` and `weights`, returns Δ_t per
/// layer (dense, mostly zero). Throws NumericError on non-finite gradients
/// before touching any state.
std::vector<Matrix> EfTopkStep(ServerOptState& state, std::vector<Matrix>& weights,
                               const std::vector<Matrix>& grads,
                               EfStepDiagnostics* diagnostics = nullptr);

}  // namespace comfetch

#endif  // COMFETCH_SERVER_OPT_H_
