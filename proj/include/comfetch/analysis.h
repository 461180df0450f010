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
// Executable versions of the theoretical statements: the prediction-error
// bound for sketched fully connected ReLU networks, the median-of-k
// recovery guarantee, and convergence-trend summaries.

#ifndef COMFETCH_ANALYSIS_H_
#define COMFETCH_ANALYSIS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "comfetch/network.h"
#include "comfetch/sketch.h"

namespace comfetch {

/// Constant in c = C·‖W‖_F²/ε², calibrated so that k = 9 medians at
/// d = 256, ε = 0.1 keep the per-entry failure rate under 5%.
inline constexpr double kSketchSizingConstant = 100.0;

/// min(d, ceil(constant·‖W‖_F²/ε²)), at least 1.
std::size_t TheoremSketchLength(double frobenius_sq, double epsilon, std::size_t d,
                                double constant = kSketchSizingConstant);
/// ceil(ln(d/δ)), at least 1.
std::size_t TheoremSketchCount(std::size_t d, double delta);

struct ErrorBoundReport {
  double epsilon = 0.0;
  /// σ_max(W_ℓ).
  std::vector<double> lambda;
  /// σ_max(H_ℓᵀH_ℓ); the largest over the k sketches of a layer.
  std::vector<double> lambda_hat;
  /// g_1 .. g_L with the d²ε² per-layer error.
  std::vector<double> terms;
  /// Same terms with dε² in place of d²ε².
  std::vector<double> terms_linear;
  double bound = 0.0;
  double bound_linear = 0.0;
  /// ‖x̃^L − x^L‖ on the last hidden activation.
  double empirical = 0.0;
  bool holds = false;
  bool holds_linear = false;
};

/// Bound terms from precomputed spectral quantities:
///   g_j = λ_j·λ_{j+1}⋯λ_L · ‖x‖ · err · Π_{n<j} λ̂_n
/// with err = d²ε² (quadratic) or dε² (linear).
std::vector<double> BoundTerms(std::span<const double> lambda, std::span<const double> lambda_hat,
                               double x_norm, std::size_t d, double epsilon, bool quadratic);

/// Compares the last hidden activation of `net` with that of the network
/// whose weights are recovered from `sketches` (median over each layer's k
/// sketches; HᵀH·W when k = 1). FC networks only; throws ContractViolation
/// otherwise. d is the widest hidden layer.
ErrorBoundReport PredictionErrorBound(const NetworkState& net,
                                      const std::vector<MultiSketch>& sketches,
                                      std::span<const double> x, double epsilon);
ErrorBoundReport PredictionErrorBound(const NetworkState& net, const SketchedNetwork& sketched,
                                      std::span<const double> x, double epsilon);

struct HcsCheckResult {
  std::size_t trials = 0;
  std::size_t entries = 0;
  std::size_t failures = 0;
  double failure_rate = 0.0;
  double max_error = 0.0;
};

/// Draws `trials` Gaussian d×d matrices scaled to ‖C‖_F = 1, sketches each
/// with k independent c×d operators and recovers by coordinate-wise median.
/// Counts entries with |Ĉ − C| > ε. Trial i uses DeriveSeed(seed, {i}), so
/// runs that differ only in k share matrices and leading operators.
HcsCheckResult HcsRecoveryCheck(std::size_t d, std::size_t c, std::size_t k, std::size_t trials,
                                double epsilon, std::uint64_t seed);

struct ConvergenceReport {
  std::vector<double> series;
  std::vector<double> running_min;
  /// Least-squares slope of log(running_min) against log(t), t = 1..T.
  double slope = 0.0;
};

ConvergenceReport MakeConvergenceReport(std::span<const double> series);

/// η = c⁸(1−ρ) / (2·d⁸·L²·√T). Logged only; far too small to train with.
double TheoreticalStepSize(std::size_t c, std::size_t d, double rho, double smoothness,
                           std::size_t rounds);

}  // namespace comfetch

#endif  // COMFETCH_ANALYSIS_H_
