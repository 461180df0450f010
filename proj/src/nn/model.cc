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

#include "comfetch/model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "comfetch/errors.h"

namespace comfetch {

// --- losses --------------------------------------------------------------------

double LossValue(LossKind kind, std::span<const double> prediction, const Sample& sample) {
  if (kind == LossKind::kSquaredError) {
    COMFETCH_REQUIRE(sample.target.size() == prediction.size(),
                     "target has " + std::to_string(sample.target.size()) +
                         " entries, prediction has " + std::to_string(prediction.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
      const double r = prediction[i] - sample.target[i];
      s += r * r;
    }
    return 0.5 * s;
  }
  COMFETCH_REQUIRE(sample.label >= 0 && static_cast<std::size_t>(sample.label) < prediction.size(),
                   "label out of range");
  const double top = *std::max_element(prediction.begin(), prediction.end());
  double z = 0.0;
  for (double v : prediction) z += std::exp(v - top);
  return std::log(z) + top - prediction[static_cast<std::size_t>(sample.label)];
}

Vector LossGradient(LossKind kind, std::span<const double> prediction, const Sample& sample) {
  Vector g(prediction.size());
  if (kind == LossKind::kSquaredError) {
    COMFETCH_REQUIRE(sample.target.size() == prediction.size(), "target/prediction mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = prediction[i] - sample.target[i];
    return g;
  }
  COMFETCH_REQUIRE(sample.label >= 0 && static_cast<std::size_t>(sample.label) < prediction.size(),
                   "label out of range");
  const double top = *std::max_element(prediction.begin(), prediction.end());
  double z = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = std::exp(prediction[i] - top);
    z += g[i];
  }
  for (double& v : g) v /= z;
  g[static_cast<std::size_t>(sample.label)] -= 1.0;
  return g;
}

int Argmax(std::span<const double> v) {
  COMFETCH_REQUIRE(!v.empty(), "empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// --- patches -------------------------------------------------------------------

namespace {

struct PatchGeometry {
  std::size_t side;
  long lo;  // first offset, e.g. -1 for a 3×3 patch, 0 for 2×2
};

PatchGeometry Geometry(std::size_t q) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(q))));
  COMFETCH_REQUIRE(q >= 1 && side * side == q, "patch size must be a perfect square");
  return {side, -static_cast<long>((side - 1) / 2)};
}

}  // namespace

Matrix Patchify(const Matrix& x, std::size_t height, std::size_t width, std::size_t q) {
  COMFETCH_REQUIRE(x.cols() == height * width, "pixel count does not match image size");
  const PatchGeometry g = Geometry(q);
  const std::size_t s = x.rows();
  Matrix out(q * s, x.cols());
  for (std::size_t ch = 0; ch < s; ++ch) {
    for (std::size_t k = 0; k < q; ++k) {
      const long dy = g.lo + static_cast<long>(k / g.side);
      const long dx = g.lo + static_cast<long>(k % g.side);
      auto dst = out.row(ch * q + k);
      for (std::size_t py = 0; py < height; ++py) {
        const long yy = static_cast<long>(py) + dy;
        if (yy < 0 || yy >= static_cast<long>(height)) continue;
        for (std::size_t px = 0; px < width; ++px) {
          const long xx = static_cast<long>(px) + dx;
          if (xx < 0 || xx >= static_cast<long>(width)) continue;
          dst[py * width + px] = x(ch, static_cast<std::size_t>(yy) * width + static_cast<std::size_t>(xx));
        }
      }
    }
  }
  return out;
}

Matrix PatchifyTranspose(const Matrix& patches, std::size_t channels, std::size_t height,
                         std::size_t width, std::size_t q) {
  COMFETCH_REQUIRE(patches.rows() == q * channels && patches.cols() == height * width,
                   "patch matrix has the wrong shape");
  const PatchGeometry g = Geometry(q);
  Matrix out(channels, height * width);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t k = 0; k < q; ++k) {
      const long dy = g.lo + static_cast<long>(k / g.side);
      const long dx = g.lo + static_cast<long>(k % g.side);
      auto src = patches.row(ch * q + k);
      for (std::size_t py = 0; py < height; ++py) {
        const long yy = static_cast<long>(py) + dy;
        if (yy < 0 || yy >= static_cast<long>(height)) continue;
        for (std::size_t px = 0; px < width; ++px) {
          const long xx = static_cast<long>(px) + dx;
          if (xx < 0 || xx >= static_cast<long>(width)) continue;
          out(ch, static_cast<std::size_t>(yy) * width + static_cast<std::size_t>(xx)) +=
              src[py * width + px];
        }
      }
    }
  }
  return out;
}

// --- shared forward / reverse drivers ----------------------------------------------

namespace {

bool IsFc(const NetworkSpec& spec) { return spec.kind == NetworkKind::kFullyConnected; }

double LayerScale(const NetworkSpec& spec, std::size_t l) {
  if (IsFc(spec)) return 1.0;
  const double m = static_cast<double>(spec.channels);
  if (l == 0) return std::sqrt(spec.c_sigma / m);
  return spec.c_res / (static_cast<double>(spec.depth) * std::sqrt(m));
}

// `Maps` supplies the linear part of every hidden layer:
//   Matrix Pre(l, u, tape)                     -> pre-activation
//   Matrix Back(l, dpre, u, tape, need_input)  -> d(loss)/du, recording weight grads
template <typename Maps>
ForwardTape RunForward(const NetworkSpec& spec, const Matrix& output, Maps& maps,
                       std::span<const double> x) {
  COMFETCH_REQUIRE(x.size() == spec.input_size(),
                   "input has " + std::to_string(x.size()) + " entries, network expects " +
                       std::to_string(spec.input_size()));
  const std::size_t L = spec.num_layers();
  ForwardTape tape;
  tape.inputs.reserve(L);
  tape.pre.reserve(L);
  tape.activations.reserve(L + 1);
  Vector x0(x.begin(), x.end());
  if (IsFc(spec)) {
    tape.activations.emplace_back(x.size(), 1, std::move(x0));
  } else {
    tape.activations.emplace_back(spec.in_channels, spec.pixels(), std::move(x0));
  }

  for (std::size_t l = 0; l < L; ++l) {
    const Matrix& prev = tape.activations[l];
    tape.inputs.push_back(IsFc(spec) ? prev
                                     : Patchify(prev, spec.image_height, spec.image_width,
                                                spec.patch));
    Matrix pre = maps.Pre(l, tape.inputs.back(), tape);
    Matrix act(pre.rows(), pre.cols());
    for (std::size_t e = 0; e < pre.size(); ++e) act.data()[e] = std::max(pre.data()[e], 0.0);
    if (!IsFc(spec)) {
      const double scale = LayerScale(spec, l);
      act *= scale;
      if (l > 0) act += prev;
    }
    tape.pre.push_back(std::move(pre));
    tape.activations.push_back(std::move(act));
  }
  tape.prediction = MatVec(output, tape.activations.back().data());
  return tape;
}

template <typename Maps>
Matrix RunBackward(const NetworkSpec& spec, const Matrix& output, Maps& maps,
                   const ForwardTape& tape, const Sample& sample, LossKind loss) {
  const std::size_t L = spec.num_layers();
  COMFETCH_REQUIRE(tape.pre.size() == L && tape.inputs.size() == L &&
                       tape.activations.size() == L + 1,
                   "tape does not belong to this network");
  const Vector dy = LossGradient(loss, tape.prediction, sample);
  const Matrix& last = tape.activations.back();
  COMFETCH_REQUIRE(last.size() == output.cols(), "tape does not belong to this network");

  Matrix g_out(output.rows(), output.cols());
  for (std::size_t o = 0; o < output.rows(); ++o)
    for (std::size_t f = 0; f < output.cols(); ++f) g_out(o, f) = dy[o] * last.data()[f];
  Matrix dx(last.rows(), last.cols(), MatTVec(output, dy));

  for (std::size_t l = L; l-- > 0;) {
    const Matrix& pre = tape.pre[l];
    const double scale = LayerScale(spec, l);
    Matrix dpre(pre.rows(), pre.cols());
    for (std::size_t e = 0; e < pre.size(); ++e)
      dpre.data()[e] = pre.data()[e] > 0.0 ? scale * dx.data()[e] : 0.0;
    const bool need_input = l > 0;
    Matrix du = maps.Back(l, dpre, tape.inputs[l], tape, need_input);
    if (!need_input) break;
    if (IsFc(spec)) {
      dx = std::move(du);
    } else {
      dx += PatchifyTranspose(du, spec.channels, spec.image_height, spec.image_width,
                              spec.patch);
    }
  }
  return g_out;
}

struct DenseMaps {
  const NetworkState& net;
  std::vector<Matrix> grads;

  Matrix Pre(std::size_t l, const Matrix& u, ForwardTape&) { return MatMul(net.weights[l], u); }
  Matrix Back(std::size_t l, const Matrix& dpre, const Matrix& u, const ForwardTape&,
              bool need_input) {
    grads[l] = MatMulTransB(dpre, u);
    return need_input ? MatMulTransA(net.weights[l], dpre) : Matrix();
  }
};

struct SketchedMaps {
  const SketchedNetwork& net;
  std::vector<Matrix> grads;

  Matrix Pre(std::size_t l, const Matrix& u, ForwardTape& tape) {
    const SketchedWeight& sw = net.layers[l];
    Matrix t = MatMul(sw.payload, u);  // c×p
    Matrix pre = UnsketchMatrix(sw.op, t);
    tape.sketched.push_back({std::move(t)});
    return pre;
  }
  Matrix Back(std::size_t l, const Matrix& dpre, const Matrix& u, const ForwardTape&,
              bool need_input) {
    const SketchedWeight& sw = net.layers[l];
    const Matrix dt = SketchMatrix(sw.op, dpre);  // c×p
    grads[l] = MatMulTransB(dt, u);
    return need_input ? MatMulTransA(sw.payload, dt) : Matrix();
  }
};

struct MultiSketchedMaps {
  const MultiSketchedNetwork& net;
  std::vector<std::vector<Matrix>> grads;

  Matrix Pre(std::size_t l, const Matrix& u, ForwardTape& tape) {
    const MultiSketchedLayer& layer = net.layers[l];
    std::vector<Matrix> products;
    std::vector<Matrix> recovered;
    for (std::size_t j = 0; j < layer.ms.k(); ++j) {
      products.push_back(MatMul(layer.payloads[j], u));
      recovered.push_back(UnsketchMatrix(layer.ms.ops[j], products.back()));
    }
    MedianSelection sel = SelectMedian(recovered);
    Matrix pre = sel.value;
    tape.sketched.push_back(std::move(products));
    tape.selections.push_back(std::move(sel));
    return pre;
  }

  Matrix Back(std::size_t l, const Matrix& dpre, const Matrix& u, const ForwardTape& tape,
              bool need_input) {
    const MultiSketchedLayer& layer = net.layers[l];
    const MedianSelection& sel = tape.selections[l];
    const std::size_t k = layer.ms.k();
    grads[l].assign(k, Matrix());
    Matrix du;
    for (std::size_t j = 0; j < k; ++j) {
      Matrix routed;
      if (k == 1) {
        routed = dpre;
      } else {
        routed = Matrix(dpre.rows(), dpre.cols());
        for (std::size_t e = 0; e < dpre.size(); ++e) {
          const std::size_t lo = sel.lower[e];
          const std::size_t hi = sel.upper[e];
          if (lo == hi) {
            if (lo == j) routed.data()[e] = dpre.data()[e];
          } else if (lo == j || hi == j) {
            routed.data()[e] = 0.5 * dpre.data()[e];
          }
        }
      }
      const Matrix dt = SketchMatrix(layer.ms.ops[j], routed);
      grads[l][j] = MatMulTransB(dt, u);
      if (!need_input) continue;
      if (j == 0) {
        du = MatMulTransA(layer.payloads[j], dt);
      } else {
        du += MatMulTransA(layer.payloads[j], dt);
      }
    }
    return du;
  }
};

void CheckSketchedShapes(const NetworkSpec& spec, const Matrix& output, std::size_t layers) {
  COMFETCH_REQUIRE(layers == spec.num_layers(), "layer count does not match the spec");
  COMFETCH_REQUIRE(output.rows() == spec.outputs && output.cols() == spec.final_features(),
                   "output layer has the wrong shape");
}

}  // namespace

ForwardTape Forward(const NetworkState& net, std::span<const double> x) {
  CheckShapes(net);
  DenseMaps maps{net, {}};
  return RunForward(net.spec, net.output, maps, x);
}

ForwardTape ForwardSketched(const SketchedNetwork& net, std::span<const double> x) {
  CheckSketchedShapes(net.spec, net.output, net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto [rows, cols] = net.spec.LayerShape(l);
    const SketchedWeight& sw = net.layers[l];
    COMFETCH_REQUIRE(sw.op.source_dim() == rows && sw.payload.rows() == sw.op.sketch_dim() &&
                         sw.payload.cols() == cols,
                     "sketched layer " + std::to_string(l) + " has the wrong shape");
  }
  SketchedMaps maps{net, {}};
  return RunForward(net.spec, net.output, maps, x);
}

ForwardTape ForwardMultiSketched(const MultiSketchedNetwork& net, std::span<const double> x) {
  CheckSketchedShapes(net.spec, net.output, net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto [rows, cols] = net.spec.LayerShape(l);
    const MultiSketchedLayer& layer = net.layers[l];
    COMFETCH_REQUIRE(layer.ms.k() >= 1 && layer.payloads.size() == layer.ms.k(),
                     "layer " + std::to_string(l) + ": payload count != sketch count");
    for (std::size_t j = 0; j < layer.ms.k(); ++j) {
      COMFETCH_REQUIRE(layer.ms.ops[j].source_dim() == rows &&
                           layer.payloads[j].rows() == layer.ms.ops[j].sketch_dim() &&
                           layer.payloads[j].cols() == cols,
                       "sketched layer " + std::to_string(l) + " has the wrong shape");
    }
  }
  MultiSketchedMaps maps{net, {}};
  return RunForward(net.spec, net.output, maps, x);
}

Gradients Backward(const NetworkState& net, const ForwardTape& tape, const Sample& sample,
                   LossKind loss) {
  CheckShapes(net);
  DenseMaps maps{net, std::vector<Matrix>(net.weights.size())};
  Gradients g;
  g.output = RunBackward(net.spec, net.output, maps, tape, sample, loss);
  g.layers = std::move(maps.grads);
  g.loss = LossValue(loss, tape.prediction, sample);
  return g;
}

Gradients BackwardSketched(const SketchedNetwork& net, const ForwardTape& tape,
                           const Sample& sample, LossKind loss) {
  CheckSketchedShapes(net.spec, net.output, net.layers.size());
  COMFETCH_REQUIRE(tape.sketched.size() == net.layers.size(), "tape was not produced by a sketched forward");
  SketchedMaps maps{net, std::vector<Matrix>(net.layers.size())};
  Gradients g;
  g.output = RunBackward(net.spec, net.output, maps, tape, sample, loss);
  g.layers = std::move(maps.grads);
  g.loss = LossValue(loss, tape.prediction, sample);
  return g;
}

MultiGradients BackwardMultiSketched(const MultiSketchedNetwork& net, const ForwardTape& tape,
                                     const Sample& sample, LossKind loss) {
  CheckSketchedShapes(net.spec, net.output, net.layers.size());
  COMFETCH_REQUIRE(tape.selections.size() == net.layers.size(),
                   "tape was not produced by a multi-sketch forward");
  MultiSketchedMaps maps{net, std::vector<std::vector<Matrix>>(net.layers.size())};
  MultiGradients g;
  g.output = RunBackward(net.spec, net.output, maps, tape, sample, loss);
  g.layers = std::move(maps.grads);
  g.loss = LossValue(loss, tape.prediction, sample);
  return g;
}

Matrix RecoverFullGradient(const SketchOperator& op, const Matrix& g) {
  return UnsketchMatrix(op, g);
}

Matrix TwoSidedBackward(const SketchOperator& op1, const SketchOperator& op2,
                        const Matrix& g_tilde) {
  COMFETCH_REQUIRE(op1.source_dim() == op2.source_dim(), "operators disagree on d");
  return TwoSidedRecover(op1, op2, g_tilde);
}

Matrix FiniteDifferenceGradient(const std::function<double(const Matrix&)>& f,
                                const Matrix& theta, double h) {
  COMFETCH_REQUIRE(h > 0.0, "step must be positive");
  Matrix grad(theta.rows(), theta.cols());
  Matrix probe = theta;
  for (std::size_t e = 0; e < theta.size(); ++e) {
    const double orig = probe.data()[e];
    probe.data()[e] = orig + h;
    const double up = f(probe);
    probe.data()[e] = orig - h;
    const double down = f(probe);
    probe.data()[e] = orig;
    grad.data()[e] = (up - down) / (2.0 * h);
  }
  return grad;
}

double SampleLoss(const NetworkState& net, const Sample& sample, LossKind loss) {
  return LossValue(loss, Forward(net, sample.features).prediction, sample);
}

}  // namespace comfetch
