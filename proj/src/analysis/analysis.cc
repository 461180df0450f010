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

#include "comfetch/analysis.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "comfetch/errors.h"
#include "comfetch/model.h"
#include "comfetch/random.h"

namespace comfetch {

std::size_t TheoremSketchLength(double frobenius_sq, double epsilon, std::size_t d,
                                double constant) {
  COMFETCH_REQUIRE(d >= 1, "empty dimension");
  COMFETCH_REQUIRE(epsilon > 0.0, "epsilon must be positive");
  const double c = std::ceil(constant * frobenius_sq / (epsilon * epsilon));
  if (!(c < static_cast<double>(d))) return d;
  return std::max<std::size_t>(1, static_cast<std::size_t>(c));
}

std::size_t TheoremSketchCount(std::size_t d, double delta) {
  COMFETCH_REQUIRE(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  const double k = std::ceil(std::log(static_cast<double>(d) / delta));
  return std::max<std::size_t>(1, static_cast<std::size_t>(k));
}

std::vector<double> BoundTerms(std::span<const double> lambda, std::span<const double> lambda_hat,
                               double x_norm, std::size_t d, double epsilon, bool quadratic) {
  COMFETCH_REQUIRE(lambda.size() == lambda_hat.size(), "lambda / lambda_hat length mismatch");
  const double dd = static_cast<double>(d);
  const double err = (quadratic ? dd * dd : dd) * epsilon * epsilon;
  const std::size_t L = lambda.size();
  std::vector<double> terms(L);
  for (std::size_t j = 0; j < L; ++j) {
    double g = x_norm * err;
    for (std::size_t i = j; i < L; ++i) g *= lambda[i];
    for (std::size_t n = 0; n < j; ++n) g *= lambda_hat[n];
    terms[j] = g;
  }
  return terms;
}

namespace {

double OperatorNormOfRecovery(const SketchOperator& op) {
  const Matrix h = Materialize(op);
  return SpectralNorm(MatMulTransA(h, h)).value;
}

ErrorBoundReport FinishReport(const NetworkState& net, std::vector<double> lambda_hat,
                              std::span<const double> x, double epsilon,
                              const Vector& sketched_last) {
  ErrorBoundReport r;
  r.epsilon = epsilon;
  r.lambda_hat = std::move(lambda_hat);
  std::size_t d = 0;
  for (const Matrix& w : net.weights) {
    r.lambda.push_back(SpectralNorm(w).value);
    d = std::max(d, w.rows());
  }
  const double x_norm = L2Norm(x);
  r.terms = BoundTerms(r.lambda, r.lambda_hat, x_norm, d, epsilon, true);
  r.terms_linear = BoundTerms(r.lambda, r.lambda_hat, x_norm, d, epsilon, false);
  for (double g : r.terms) r.bound += g;
  for (double g : r.terms_linear) r.bound_linear += g;

  const ForwardTape dense = Forward(net, x);
  const Vector& exact = dense.activations.back().data();
  Vector diff(exact.size());
  for (std::size_t i = 0; i < exact.size(); ++i) diff[i] = sketched_last[i] - exact[i];
  r.empirical = L2Norm(diff);
  r.holds = r.empirical <= r.bound;
  r.holds_linear = r.empirical <= r.bound_linear;
  return r;
}

void RequireFc(const NetworkState& net) {
  if (net.spec.kind != NetworkKind::kFullyConnected)
    throw ContractViolation("prediction error bound is only defined for fully connected networks");
}

}  // namespace

ErrorBoundReport PredictionErrorBound(const NetworkState& net,
                                      const std::vector<MultiSketch>& sketches,
                                      std::span<const double> x, double epsilon) {
  RequireFc(net);
  CheckShapes(net);
  COMFETCH_REQUIRE(sketches.size() == net.weights.size(), "one multi-sketch per layer required");
  NetworkState recovered = net;
  std::vector<double> lambda_hat;
  for (std::size_t l = 0; l < sketches.size(); ++l) {
    const MultiSketch& ms = sketches[l];
    COMFETCH_REQUIRE(ms.k() >= 1, "empty multi-sketch");
    std::vector<Matrix> payloads;
    double top = 0.0;
    for (const SketchOperator& op : ms.ops) {
      payloads.push_back(SketchMatrix(op, net.weights[l]));
      top = std::max(top, OperatorNormOfRecovery(op));
    }
    recovered.weights[l] = RecoverMedian(ms, payloads);
    lambda_hat.push_back(top);
  }
  const ForwardTape approx = Forward(recovered, x);
  return FinishReport(net, std::move(lambda_hat), x, epsilon, approx.activations.back().data());
}

ErrorBoundReport PredictionErrorBound(const NetworkState& net, const SketchedNetwork& sketched,
                                      std::span<const double> x, double epsilon) {
  RequireFc(net);
  CheckShapes(net);
  COMFETCH_REQUIRE(sketched.layers.size() == net.weights.size(), "layer count mismatch");
  std::vector<double> lambda_hat;
  for (const SketchedWeight& sw : sketched.layers)
    lambda_hat.push_back(OperatorNormOfRecovery(sw.op));
  const ForwardTape approx = ForwardSketched(sketched, x);
  return FinishReport(net, std::move(lambda_hat), x, epsilon, approx.activations.back().data());
}

HcsCheckResult HcsRecoveryCheck(std::size_t d, std::size_t c, std::size_t k, std::size_t trials,
                                double epsilon, std::uint64_t seed) {
  COMFETCH_REQUIRE(trials >= 1, "need at least one trial");
  COMFETCH_REQUIRE(k >= 1, "need at least one sketch");
  HcsCheckResult out;
  out.trials = trials;
  std::vector<Matrix> estimates(k);
  std::vector<double> column(k);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed = DeriveSeed(seed, {t});
    Rng rng(trial_seed);
    Matrix m(d, d);
    for (double& v : m.data()) v = rng.Normal();
    m *= 1.0 / FrobeniusNorm(m);

    const MultiSketch ms = MultiSketch::Make(d, c, k, DeriveSeed(trial_seed, {1}));
    for (std::size_t j = 0; j < k; ++j)
      estimates[j] = UnsketchMatrix(ms.ops[j], SketchMatrix(ms.ops[j], m));
    for (std::size_t e = 0; e < m.size(); ++e) {
      for (std::size_t j = 0; j < k; ++j) column[j] = estimates[j].data()[e];
      const double err = std::abs(MedianOf(column) - m.data()[e]);
      out.max_error = std::max(out.max_error, err);
      if (err > epsilon) ++out.failures;
    }
    out.entries += m.size();
  }
  out.failure_rate = static_cast<double>(out.failures) / static_cast<double>(out.entries);
  return out;
}

ConvergenceReport MakeConvergenceReport(std::span<const double> series) {
  COMFETCH_REQUIRE(!series.empty(), "empty history");
  ConvergenceReport r;
  r.series.assign(series.begin(), series.end());
  double best = std::numeric_limits<double>::infinity();
  for (double v : series) {
    best = std::min(best, v);
    r.running_min.push_back(best);
  }
  const std::size_t n = series.size();
  if (n < 2) return r;
  constexpr double kFloor = 1e-300;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double lx = std::log(static_cast<double>(t + 1));
    const double ly = std::log(std::max(r.running_min[t], kFloor));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double nn = static_cast<double>(n);
  const double denom = nn * sxx - sx * sx;
  r.slope = denom == 0.0 ? 0.0 : (nn * sxy - sx * sy) / denom;
  return r;
}

double TheoreticalStepSize(std::size_t c, std::size_t d, double rho, double smoothness,
                           std::size_t rounds) {
  COMFETCH_REQUIRE(d >= 1 && rounds >= 1 && smoothness > 0.0, "invalid arguments");
  const double ratio = static_cast<double>(c) / static_cast<double>(d);
  return std::pow(ratio, 8) * (1.0 - rho) /
         (2.0 * smoothness * smoothness * std::sqrt(static_cast<double>(rounds)));
}

}  // namespace comfetch
