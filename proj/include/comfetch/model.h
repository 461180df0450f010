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
// Forward and reverse passes for dense, sketched and multi-sketched networks.
//
// The sketched layer map is u -> Hᵀ·(S·u) with S = H·W the stored payload.
// It is evaluated in exactly that order, so the widest intermediate is the
// d-dimensional pre-activation and no d×d product is ever formed. The reverse
// pass differentiates with respect to S:
//   dS = (H·dpre)·uᵀ,   du = Sᵀ·(H·dpre).

#ifndef COMFETCH_MODEL_H_
#define COMFETCH_MODEL_H_

#include <functional>
#include <span>
#include <vector>

#include "comfetch/matrix.h"
#include "comfetch/network.h"

namespace comfetch {

enum class LossKind { kSquaredError, kSoftmaxCrossEntropy };

struct Sample {
  Vector features;
  /// Regression target (squared error).
  Vector target;
  /// Class index (cross-entropy); -1 when unlabeled.
  int label = -1;
};

/// ½‖ŷ − y‖² or −log softmax(ŷ)[label].
double LossValue(LossKind kind, std::span<const double> prediction, const Sample& sample);
Vector LossGradient(LossKind kind, std::span<const double> prediction, const Sample& sample);

/// Everything the reverse pass needs. Nothing here is d×d.
struct ForwardTape {
  /// Input of each hidden layer's linear map: x^(ℓ-1) (FC) or φ(x^(ℓ-1)).
  std::vector<Matrix> inputs;
  /// Pre-activations, d_ℓ × p.
  std::vector<Matrix> pre;
  /// c_ℓ × p products S·u (sketched paths; one per sketch for multi).
  std::vector<std::vector<Matrix>> sketched;
  /// Per-coordinate median choice (multi-sketch only).
  std::vector<MedianSelection> selections;
  /// x^0 .. x^L.
  std::vector<Matrix> activations;
  Vector prediction;
};

ForwardTape Forward(const NetworkState& net, std::span<const double> x);
ForwardTape ForwardSketched(const SketchedNetwork& net, std::span<const double> x);
/// Each pre-activation coordinate is the median of the k recoveries
/// H_jᵀ(S_j·u); the choice is recorded in the tape.
ForwardTape ForwardMultiSketched(const MultiSketchedNetwork& net, std::span<const double> x);

struct Gradients {
  /// Dense: d×n per layer. Sketched: c×n per layer (gradient w.r.t. H·W).
  std::vector<Matrix> layers;
  Matrix output;
  double loss = 0.0;
};

struct MultiGradients {
  /// layers[ℓ][j]: gradient w.r.t. H_j·W_ℓ.
  std::vector<std::vector<Matrix>> layers;
  Matrix output;
  double loss = 0.0;
};

Gradients Backward(const NetworkState& net, const ForwardTape& tape,
                   const Sample& sample, LossKind loss);
Gradients BackwardSketched(const SketchedNetwork& net, const ForwardTape& tape,
                           const Sample& sample, LossKind loss);
/// The median choices are treated as constants: each coordinate's upstream
/// gradient flows only through the sketch(es) that produced it.
MultiGradients BackwardMultiSketched(const MultiSketchedNetwork& net, const ForwardTape& tape,
                                     const Sample& sample, LossKind loss);

/// Hᵀ·g: the gradient with respect to the full weight W.
Matrix RecoverFullGradient(const SketchOperator& op, const Matrix& g);
/// H₁ᵀ·g̃·H₂ for a weight sketched from both sides as H₁·W·H₂ᵀ.
Matrix TwoSidedBackward(const SketchOperator& op1, const SketchOperator& op2,
                        const Matrix& g_tilde);

/// Central differences (f(θ + h·e) − f(θ − h·e)) / 2h for every entry.
Matrix FiniteDifferenceGradient(const std::function<double(const Matrix&)>& f,
                                const Matrix& theta, double h);

/// Stacks the q-neighbourhood of every pixel: x is s×p (p = height·width),
/// the result is (q·s)×p with row index channel·q + patch offset. Zero
/// padding at the borders; q must be a perfect square.
Matrix Patchify(const Matrix& x, std::size_t height, std::size_t width, std::size_t q);
/// Adjoint of Patchify.
Matrix PatchifyTranspose(const Matrix& patches, std::size_t channels, std::size_t height,
                         std::size_t width, std::size_t q);

/// Loss of a single sample through the dense network.
double SampleLoss(const NetworkState& net, const Sample& sample, LossKind loss);
/// Index of the largest output.
int Argmax(std::span<const double> v);

}  // namespace comfetch

#endif  // COMFETCH_MODEL_H_
