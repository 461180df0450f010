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

#ifndef COMFETCH_NETWORK_H_
#define COMFETCH_NETWORK_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "comfetch/matrix.h"
#include "comfetch/sketch.h"

namespace comfetch {

enum class NetworkKind { kFullyConnected, kConvResNet };

/// Architecture description. Hidden layers are ReLU, there are no biases,
/// and the output layer is a dense linear read-out of the last activation.
///
/// Fully connected: widths = {n0, d1, ..., dL}; layer ℓ maps d(ℓ-1) -> dℓ and
/// its weight is dℓ × d(ℓ-1).
///
/// Convolutional ResNet: inputs are in_channels × pixels images; layer 1 is
/// channels × (patch·in_channels), layers 2..depth are channels ×
/// (patch·channels) with residual connections scaled by c_res/(depth·√m).
struct NetworkSpec {
  NetworkKind kind = NetworkKind::kFullyConnected;
  std::vector<std::size_t> widths;
  std::size_t outputs = 1;

  std::size_t in_channels = 1;
  std::size_t channels = 0;
  std::size_t image_height = 0;
  std::size_t image_width = 0;
  std::size_t patch = 1;
  std::size_t depth = 0;
  double c_sigma = 2.0;
  double c_res = 0.5;

  static NetworkSpec FullyConnected(std::vector<std::size_t> widths, std::size_t outputs = 1);
  static NetworkSpec ConvResNet(std::size_t in_channels, std::size_t channels,
                                std::size_t image_height, std::size_t image_width,
                                std::size_t patch, std::size_t depth, double c_sigma,
                                double c_res, std::size_t outputs = 1);

  std::size_t num_layers() const;
  std::size_t input_size() const;
  std::size_t pixels() const { return image_height * image_width; }
  /// (rows, cols) of hidden weight `index` (0-based). Rows are the sketched
  /// dimension.
  std::pair<std::size_t, std::size_t> LayerShape(std::size_t index) const;
  /// Length of the vectorised last activation read by the output layer.
  std::size_t final_features() const;

  /// Checks every structural invariant, including 0 < c_res < 1.
  void Validate() const;
  std::string Describe() const;
};

struct NetworkState {
  NetworkSpec spec;
  std::vector<Matrix> weights;
  /// outputs × final_features; never sketched.
  Matrix output;
};

/// Zero-mean Gaussian weights with standard deviation sqrt(2/fan_in).
NetworkState InitNetwork(const NetworkSpec& spec, std::uint64_t seed);

/// Throws ContractViolation when weight shapes disagree with the spec.
void CheckShapes(const NetworkState& net);

struct SketchedNetwork {
  NetworkSpec spec;
  std::vector<SketchedWeight> layers;
  Matrix output;
};

struct MultiSketchedLayer {
  MultiSketch ms;
  std::vector<Matrix> payloads;  // payloads[j] = H_j·W
};

struct MultiSketchedNetwork {
  NetworkSpec spec;
  std::vector<MultiSketchedLayer> layers;
  Matrix output;
};

/// One operator per hidden layer; ops[i] must have source_dim == rows of W_i.
SketchedNetwork SketchNetwork(const NetworkState& net, std::vector<SketchOperator> ops);
MultiSketchedNetwork SketchNetworkMulti(const NetworkState& net, std::vector<MultiSketch> sketches);

/// Dense network with weights HᵀH·W. Computes the same function as the
/// sketched network, in a different association order.
NetworkState DenseSurrogate(const NetworkState& net, const std::vector<SketchOperator>& ops);

}  // namespace comfetch

#endif  // COMFETCH_NETWORK_H_
