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

#include "comfetch/network.h"

#include <cmath>
#include <sstream>

#include "comfetch/errors.h"
#include "comfetch/random.h"

namespace comfetch {

NetworkSpec NetworkSpec::FullyConnected(std::vector<std::size_t> widths, std::size_t outputs) {
  NetworkSpec spec;
  spec.kind = NetworkKind::kFullyConnected;
  spec.widths = std::move(widths);
  spec.outputs = outputs;
  return spec;
}

NetworkSpec NetworkSpec::ConvResNet(std::size_t in_channels, std::size_t channels,
                                    std::size_t image_height, std::size_t image_width,
                                    std::size_t patch, std::size_t depth, double c_sigma,
                                    double c_res, std::size_t outputs) {
  NetworkSpec spec;
  spec.kind = NetworkKind::kConvResNet;
  spec.in_channels = in_channels;
  spec.channels = channels;
  spec.image_height = image_height;
  spec.image_width = image_width;
  spec.patch = patch;
  spec.depth = depth;
  spec.c_sigma = c_sigma;
  spec.c_res = c_res;
  spec.outputs = outputs;
  return spec;
}

std::size_t NetworkSpec::num_layers() const {
  if (kind == NetworkKind::kFullyConnected) return widths.empty() ? 0 : widths.size() - 1;
  return depth;
}

std::size_t NetworkSpec::input_size() const {
  if (kind == NetworkKind::kFullyConnected) return widths.empty() ? 0 : widths.front();
  return in_channels * pixels();
}

std::pair<std::size_t, std::size_t> NetworkSpec::LayerShape(std::size_t index) const {
  COMFETCH_REQUIRE(index < num_layers(), "layer index out of range");
  if (kind == NetworkKind::kFullyConnected) return {widths[index + 1], widths[index]};
  return {channels, patch * (index == 0 ? in_channels : channels)};
}

std::size_t NetworkSpec::final_features() const {
  if (kind == NetworkKind::kFullyConnected) return widths.empty() ? 0 : widths.back();
  return channels * pixels();
}

void NetworkSpec::Validate() const {
  COMFETCH_REQUIRE(outputs >= 1, "need at least one output");
  if (kind == NetworkKind::kFullyConnected) {
    COMFETCH_REQUIRE(widths.size() >= 2, "need an input width and at least one layer");
    for (std::size_t w : widths) COMFETCH_REQUIRE(w >= 1, "zero width");
    return;
  }
  COMFETCH_REQUIRE(depth >= 1, "depth must be at least 1");
  COMFETCH_REQUIRE(in_channels >= 1 && channels >= 1, "zero channels");
  COMFETCH_REQUIRE(pixels() >= 1, "empty image");
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(patch))));
  COMFETCH_REQUIRE(patch >= 1 && side * side == patch, "patch size must be a perfect square");
  COMFETCH_REQUIRE(c_sigma > 0.0, "c_sigma must be positive");
  COMFETCH_REQUIRE(c_res > 0.0 && c_res < 1.0, "c_res must lie in (0, 1)");
}

std::string NetworkSpec::Describe() const {
  std::ostringstream os;
  if (kind == NetworkKind::kFullyConnected) {
    os << "fc:";
    for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "-" : "") << widths[i];
    os << "-" << outputs;
  } else {
    os << "conv:s0=" << in_channels << ",m=" << channels << ",image=" << image_height << "x"
       << image_width << ",q=" << patch << ",L=" << depth << ",c_sigma=" << c_sigma
       << ",c_res=" << c_res << ",outputs=" << outputs;
  }
  return os.str();
}

NetworkState InitNetwork(const NetworkSpec& spec, std::uint64_t seed) {
  spec.Validate();
  NetworkState net;
  net.spec = spec;
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto [rows, cols] = spec.LayerShape(l);
    Matrix w(rows, cols);
    const double stddev = std::sqrt(2.0 / static_cast<double>(cols));
    for (double& v : w.data()) v = stddev * rng.Normal();
    net.weights.push_back(std::move(w));
  }
  net.output = Matrix(spec.outputs, spec.final_features());
  const double stddev = std::sqrt(2.0 / static_cast<double>(spec.final_features()));
  for (double& v : net.output.data()) v = stddev * rng.Normal();
  return net;
}

void CheckShapes(const NetworkState& net) {
  COMFETCH_REQUIRE(net.weights.size() == net.spec.num_layers(),
                   "expected " + std::to_string(net.spec.num_layers()) + " weights, got " +
                       std::to_string(net.weights.size()));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto [rows, cols] = net.spec.LayerShape(l);
    COMFETCH_REQUIRE(net.weights[l].rows() == rows && net.weights[l].cols() == cols,
                     "layer " + std::to_string(l) + " has the wrong shape");
  }
  COMFETCH_REQUIRE(net.output.rows() == net.spec.outputs &&
                       net.output.cols() == net.spec.final_features(),
                   "output layer has the wrong shape");
}

SketchedNetwork SketchNetwork(const NetworkState& net, std::vector<SketchOperator> ops) {
  CheckShapes(net);
  COMFETCH_REQUIRE(ops.size() == net.weights.size(), "one operator per layer required");
  SketchedNetwork out;
  out.spec = net.spec;
  out.output = net.output;
  for (std::size_t l = 0; l < ops.size(); ++l)
    out.layers.push_back(MakeSketchedWeight(std::move(ops[l]), net.weights[l]));
  return out;
}

MultiSketchedNetwork SketchNetworkMulti(const NetworkState& net,
                                        std::vector<MultiSketch> sketches) {
  CheckShapes(net);
  COMFETCH_REQUIRE(sketches.size() == net.weights.size(), "one sketch set per layer required");
  MultiSketchedNetwork out;
  out.spec = net.spec;
  out.output = net.output;
  for (std::size_t l = 0; l < sketches.size(); ++l) {
    COMFETCH_REQUIRE(sketches[l].k() >= 1, "empty sketch set");
    MultiSketchedLayer layer;
    for (const SketchOperator& op : sketches[l].ops)
      layer.payloads.push_back(SketchMatrix(op, net.weights[l]));
    layer.ms = std::move(sketches[l]);
    out.layers.push_back(std::move(layer));
  }
  return out;
}

NetworkState DenseSurrogate(const NetworkState& net, const std::vector<SketchOperator>& ops) {
  CheckShapes(net);
  COMFETCH_REQUIRE(ops.size() == net.weights.size(), "one operator per layer required");
  NetworkState out = net;
  for (std::size_t l = 0; l < ops.size(); ++l)
    out.weights[l] = UnsketchMatrix(ops[l], SketchMatrix(ops[l], net.weights[l]));
  return out;
}

}  // namespace comfetch
