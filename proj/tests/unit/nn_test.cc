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

#include <doctest.h>

#include <cmath>

#include "comfetch/errors.h"
#include "comfetch/model.h"
#include "comfetch/network.h"
#include "comfetch/random.h"
#include "test_util.h"

namespace comfetch {
namespace {

using testing::DenseSketch;
using testing::MaxAbsOf;
using testing::MaxDiff;
using testing::NaiveMatMul;
using testing::NaiveTranspose;
using testing::RandomMatrix;
using testing::RandomVector;

std::vector<SketchOperator> HalfSketches(const NetworkState& net, Rng& rng) {
  std::vector<SketchOperator> ops;
  for (const Matrix& w : net.weights)
    ops.emplace_back(w.rows(), std::max<std::size_t>(1, w.rows() / 2), rng.Next());
  return ops;
}

std::vector<SketchOperator> Identities(const NetworkState& net) {
  std::vector<SketchOperator> ops;
  for (const Matrix& w : net.weights) ops.push_back(SketchOperator::Identity(w.rows()));
  return ops;
}

// Relative error with a tiny floor so an all-dead network (exact zero
// gradient against roundoff) does not read as a total mismatch.
double RelErr(const Matrix& a, const Matrix& b) {
  const double scale = std::max({MaxAbsOf(a.data()), MaxAbsOf(b.data()), 1e-10});
  return MaxDiff(a, b) / scale;
}

bool NearKink(const ForwardTape& tape, double margin) {
  for (const Matrix& p : tape.pre)
    for (double v : p.data())
      if (std::abs(v) < margin) return true;
  return false;
}

// Naive gather for one pixel neighbourhood, same offset convention as the
// library: offsets run row-major over a side×side window starting at
// -(side-1)/2.
double Gather(const Matrix& x, std::size_t ch, std::size_t h, std::size_t w, std::size_t pixel,
              std::size_t k, std::size_t q) {
  const long side = std::lround(std::sqrt(static_cast<double>(q)));
  const long lo = -(side - 1) / 2;
  const long y = static_cast<long>(pixel / w) + lo + static_cast<long>(k) / side;
  const long xx = static_cast<long>(pixel % w) + lo + static_cast<long>(k) % side;
  if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(w)) return 0.0;
  return x(ch, static_cast<std::size_t>(y) * w + static_cast<std::size_t>(xx));
}

// Straight-line residual conv network evaluation.
Vector NaiveConvForward(const NetworkState& net, const Vector& x0) {
  const NetworkSpec& s = net.spec;
  Matrix x(s.in_channels, s.pixels(), x0);
  const double m = static_cast<double>(s.channels);
  for (std::size_t l = 0; l < s.depth; ++l) {
    const Matrix& w = net.weights[l];
    Matrix next(s.channels, s.pixels());
    for (std::size_t o = 0; o < s.channels; ++o) {
      for (std::size_t j = 0; j < s.pixels(); ++j) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < x.rows(); ++ch)
          for (std::size_t k = 0; k < s.patch; ++k)
            acc += w(o, ch * s.patch + k) *
                   Gather(x, ch, s.image_height, s.image_width, j, k, s.patch);
        const double scale =
            l == 0 ? std::sqrt(s.c_sigma / m) : s.c_res / (static_cast<double>(s.depth) * std::sqrt(m));
        next(o, j) = scale * testing::Relu(acc) + (l == 0 ? 0.0 : x(o, j));
      }
    }
    x = std::move(next);
  }
  Vector y(s.outputs, 0.0);
  for (std::size_t o = 0; o < s.outputs; ++o)
    for (std::size_t f = 0; f < x.size(); ++f) y[o] += net.output(o, f) * x.data()[f];
  return y;
}

NetworkSpec TinyConv() { return NetworkSpec::ConvResNet(1, 4, 3, 3, 4, 3, 2.0, 0.5, 2); }

// --- fully connected forward --------------------------------------------------------

TEST_CASE("one-layer identity network returns the first input") {
  NetworkState net = InitNetwork(NetworkSpec::FullyConnected({3, 3}, 1), 1);
  net.weights[0] = Matrix::Identity(3);
  net.output = Matrix::FromRows({{1, 0, 0}});
  CHECK(Forward(net, Vector{2.5, -1.0, 4.0}).prediction == Vector{2.5});
}

TEST_CASE("all-zero weights predict zero") {
  NetworkState net = InitNetwork(NetworkSpec::FullyConnected({4, 5, 3}, 2), 2);
  for (Matrix& w : net.weights) w = Matrix(w.rows(), w.cols());
  Rng rng(1);
  CHECK(Forward(net, RandomVector(rng, 4)).prediction == Vector{0.0, 0.0});
}

TEST_CASE("dense forward matches the straight-line evaluator") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const NetworkState net = testing::RandomFcNet(rng);
    const Vector x = RandomVector(rng, net.spec.input_size());
    const Vector y = Forward(net, x).prediction;
    const Vector oracle = testing::NaiveFcForward(net, x);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - oracle[i]) < 1e-12);
  }
}

TEST_CASE("forward rejects a wrong input length") {
  const NetworkState net = InitNetwork(NetworkSpec::FullyConnected({4, 3}, 1), 3);
  CHECK_THROWS_AS(Forward(net, Vector(5)), ContractViolation);
  NetworkState bad = net;
  bad.weights[0] = Matrix(2, 4);
  CHECK_THROWS_AS(CheckShapes(bad), ContractViolation);
}

TEST_CASE("identity-hash sketched forward equals the dense forward exactly") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const NetworkState net = testing::RandomFcNet(rng);
    const Vector x = RandomVector(rng, net.spec.input_size());
    CHECK(ForwardSketched(SketchNetwork(net, Identities(net)), x).prediction ==
          Forward(net, x).prediction);
  }
}

TEST_CASE("sketched forward of a zero input is zero throughout") {
  Rng rng(4);
  const NetworkState net = testing::RandomFcNet(rng);
  const ForwardTape tape =
      ForwardSketched(SketchNetwork(net, HalfSketches(net, rng)), Vector(net.spec.input_size()));
  for (const Matrix& a : tape.activations)
    for (double v : a.data()) CHECK(v == 0.0);
  for (double v : tape.prediction) CHECK(v == 0.0);
}

TEST_CASE("property: sketched forward equals the dense surrogate HᵀH·W") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const NetworkState net = testing::RandomFcNet(rng, 16);
    const auto ops = HalfSketches(net, rng);
    const Vector x = RandomVector(rng, net.spec.input_size());
    const ForwardTape sk = ForwardSketched(SketchNetwork(net, ops), x);
    const ForwardTape dense = Forward(DenseSurrogate(net, ops), x);
    for (std::size_t i = 0; i < sk.prediction.size(); ++i)
      CHECK(std::abs(sk.prediction[i] - dense.prediction[i]) < 1e-12);
    // The tape keeps the c-dimensional products.
    for (std::size_t l = 0; l < ops.size(); ++l)
      CHECK(sk.sketched[l].front().rows() == ops[l].sketch_dim());
  }
}

TEST_CASE("surrogate weights are HᵀH·W built from materialized operators") {
  Rng rng(6);
  const NetworkState net = testing::RandomFcNet(rng, 10);
  const auto ops = HalfSketches(net, rng);
  const NetworkState s = DenseSurrogate(net, ops);
  for (std::size_t l = 0; l < ops.size(); ++l) {
    const Matrix h = DenseSketch(ops[l]);
    CHECK(MaxDiff(s.weights[l], NaiveMatMul(NaiveMatMul(NaiveTranspose(h), h), net.weights[l])) <
          1e-12);
  }
}

// --- convolutional ResNet -----------------------------------------------------------

TEST_CASE("conv forward matches the straight-line evaluator") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const NetworkState net = InitNetwork(TinyConv(), rng.Next());
    const Vector x = RandomVector(rng, net.spec.input_size());
    const Vector y = Forward(net, x).prediction;
    const Vector oracle = NaiveConvForward(net, x);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - oracle[i]) < 1e-12);
  }
  const NetworkSpec two_channel = NetworkSpec::ConvResNet(2, 3, 4, 3, 9, 2, 2.0, 0.3, 1);
  const NetworkState net = InitNetwork(two_channel, 8);
  const Vector x = RandomVector(rng, net.spec.input_size());
  CHECK(std::abs(Forward(net, x).prediction[0] - NaiveConvForward(net, x)[0]) < 1e-12);
}

TEST_CASE("conv forward with c_res = 0 depends only on layer one") {
  Rng rng(9);
  NetworkState net = InitNetwork(TinyConv(), 10);
  net.spec.c_res = 0.0;
  const Vector x = RandomVector(rng, net.spec.input_size());
  const ForwardTape tape = Forward(net, x);
  for (std::size_t l = 2; l < tape.activations.size(); ++l)
    CHECK(tape.activations[l] == tape.activations[1]);
  NetworkState changed = net;
  changed.weights[2] = RandomMatrix(rng, net.weights[2].rows(), net.weights[2].cols());
  CHECK(Forward(changed, x).prediction == tape.prediction);
}

TEST_CASE("conv forward of a zero image is zero") {
  const NetworkState net = InitNetwork(TinyConv(), 11);
  for (double v : Forward(net, Vector(net.spec.input_size())).prediction) CHECK(v == 0.0);
}

TEST_CASE("identity-hash sketched conv forward equals the unsketched forward") {
  Rng rng(12);
  const NetworkState net = InitNetwork(TinyConv(), 13);
  const Vector x = RandomVector(rng, net.spec.input_size());
  CHECK(ForwardSketched(SketchNetwork(net, Identities(net)), x).prediction ==
        Forward(net, x).prediction);
  const auto ops = HalfSketches(net, rng);
  const Vector a = ForwardSketched(SketchNetwork(net, ops), x).prediction;
  const Vector b = Forward(DenseSurrogate(net, ops), x).prediction;
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("conv spec validation") {
  CHECK_THROWS_AS(NetworkSpec::ConvResNet(1, 4, 3, 3, 4, 3, 2.0, 1.0).Validate(),
                  ContractViolation);
  CHECK_THROWS_AS(NetworkSpec::ConvResNet(1, 4, 3, 3, 5, 3, 2.0, 0.5).Validate(),
                  ContractViolation);
  CHECK_THROWS_AS(NetworkSpec::ConvResNet(1, 4, 3, 3, 4, 0, 2.0, 0.5).Validate(),
                  ContractViolation);
  const NetworkSpec s = TinyConv();
  CHECK(s.LayerShape(0) == std::pair<std::size_t, std::size_t>{4, 4});
  CHECK(s.LayerShape(1) == std::pair<std::size_t, std::size_t>{4, 16});
  CHECK(s.final_features() == 36);
}

// --- patchify ----------------------------------------------------------------------

TEST_CASE("patchify with q = 1 is the identity") {
  Rng rng(14);
  const Matrix x = RandomMatrix(rng, 2, 12);
  CHECK(Patchify(x, 3, 4, 1) == x);
}

TEST_CASE("3x3 patches of a 2x2 image have four nonzeros per column") {
  const Matrix x(1, 4, Vector{1, 2, 3, 4});
  const Matrix p = Patchify(x, 2, 2, 9);
  CHECK(p.rows() == 9);
  for (std::size_t j = 0; j < 4; ++j) {
    int nonzero = 0;
    for (std::size_t k = 0; k < 9; ++k) nonzero += p(k, j) != 0.0 ? 1 : 0;
    CHECK(nonzero == 4);
  }
  // The centre tap is the pixel itself.
  for (std::size_t j = 0; j < 4; ++j) CHECK(p(4, j) == x(0, j));
}

TEST_CASE("patchify matches the per-pixel gather oracle") {
  Rng rng(15);
  for (std::size_t q : {1u, 4u, 9u, 16u}) {
    const Matrix x = RandomMatrix(rng, 3, 20);
    const Matrix p = Patchify(x, 4, 5, q);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t k = 0; k < q; ++k)
        for (std::size_t j = 0; j < 20; ++j) CHECK(p(ch * q + k, j) == Gather(x, ch, 4, 5, j, k, q));
  }
}

TEST_CASE("property: patchify transpose is the adjoint") {
  Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = testing::RandomIn(rng, 1, 5), w = testing::RandomIn(rng, 1, 5),
                      s = testing::RandomIn(rng, 1, 3);
    const std::size_t side = testing::RandomIn(rng, 1, 3), q = side * side;
    const Matrix x = RandomMatrix(rng, s, h * w);
    const Matrix y = RandomMatrix(rng, q * s, h * w);
    const double lhs = Dot(Patchify(x, h, w, q).data(), y.data());
    const double rhs = Dot(x.data(), PatchifyTranspose(y, s, h, w, q).data());
    CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

// --- losses and finite differences ----------------------------------------------------

TEST_CASE("finite differences of simple functions") {
  Rng rng(17);
  const Matrix theta = RandomMatrix(rng, 3, 4);
  const Matrix g = FiniteDifferenceGradient(
      [](const Matrix& t) { return 0.5 * SquaredNorm(t.data()); }, theta, 1e-4);
  CHECK(MaxDiff(g, theta) < 1e-8);
  const Matrix zero = FiniteDifferenceGradient([](const Matrix&) { return 3.0; }, theta, 1e-3);
  CHECK(MaxAbsOf(zero.data()) == 0.0);
  const Matrix ones = FiniteDifferenceGradient(
      [](const Matrix& t) {
        double s = 0.0;
        for (double v : t.data()) s += v;
        return s;
      },
      theta, 1e-3);
  CHECK(MaxDiff(ones, Matrix(3, 4, 1.0)) < 1e-10);
  CHECK_THROWS_AS(FiniteDifferenceGradient([](const Matrix&) { return 0.0; }, theta, 0.0),
                  ContractViolation);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(18);
  for (LossKind kind : {LossKind::kSquaredError, LossKind::kSoftmaxCrossEntropy}) {
    const Sample s = testing::RandomSample(rng, 2, 5);
    const Matrix pred(1, 5, RandomVector(rng, 5, 3.0));
    const Matrix fd = FiniteDifferenceGradient(
        [&](const Matrix& p) { return LossValue(kind, p.data(), s); }, pred, 1e-6);
    const Matrix g(1, 5, LossGradient(kind, pred.data(), s));
    CHECK(MaxDiff(fd, g) < 1e-8);
    CHECK(LossValue(kind, pred.data(), s) >= 0.0);
  }
  Sample big;
  big.label = 0;
  CHECK(std::isfinite(LossValue(LossKind::kSoftmaxCrossEntropy, Vector{1000.0, -1000.0}, big)));
}

TEST_CASE("property: ReLU is 1-Lipschitz") {
  Rng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector u = RandomVector(rng, 10), v = RandomVector(rng, 10);
    Vector ru(10), rv(10), diff(10);
    for (std::size_t i = 0; i < 10; ++i) {
      ru[i] = testing::Relu(u[i]) - testing::Relu(v[i]);
      diff[i] = u[i] - v[i];
    }
    CHECK(L2Norm(ru) <= L2Norm(diff));
  }
}

// --- reverse mode ----------------------------------------------------------------------

TEST_CASE("one-layer identity-hash gradient reduces to the dense outer product") {
  Rng rng(20);
  const NetworkState net = InitNetwork(NetworkSpec::FullyConnected({5, 6}, 2), 21);
  const Sample s = testing::RandomSample(rng, 5, 2);
  const SketchedNetwork sk = SketchNetwork(net, Identities(net));
  const Gradients g = BackwardSketched(sk, ForwardSketched(sk, s.features), s,
                                       LossKind::kSquaredError);
  // dL/dW = (mask ⊙ aᵀ·(ŷ − y))·xᵀ written out by hand.
  const Vector y = testing::NaiveFcForward(net, s.features);
  Matrix expect(6, 5);
  for (std::size_t i = 0; i < 6; ++i) {
    double pre = 0.0;
    for (std::size_t j = 0; j < 5; ++j) pre += net.weights[0](i, j) * s.features[j];
    double up = 0.0;
    for (std::size_t o = 0; o < 2; ++o) up += net.output(o, i) * (y[o] - s.target[o]);
    for (std::size_t j = 0; j < 5; ++j) expect(i, j) = pre > 0 ? up * s.features[j] : 0.0;
  }
  CHECK(MaxDiff(g.layers[0], expect) < 1e-12);
}

TEST_CASE("perfect fit under squared loss gives zero gradients") {
  Rng rng(22);
  const NetworkState net = testing::RandomFcNet(rng);
  const auto ops = HalfSketches(net, rng);
  const SketchedNetwork sk = SketchNetwork(net, ops);
  Sample s;
  s.features = RandomVector(rng, net.spec.input_size());
  const ForwardTape tape = ForwardSketched(sk, s.features);
  s.target = tape.prediction;
  const Gradients g = BackwardSketched(sk, tape, s, LossKind::kSquaredError);
  for (const Matrix& m : g.layers) CHECK(MaxAbsOf(m.data()) == 0.0);
  CHECK(MaxAbsOf(g.output.data()) == 0.0);
}

TEST_CASE("sketched gradients match finite differences with respect to the payload") {
  Rng rng(23);
  int checked = 0;
  while (checked < 20) {
    const NetworkState net = testing::RandomFcNet(rng, 10);
    const auto ops = HalfSketches(net, rng);
    const SketchedNetwork sk = SketchNetwork(net, ops);
    const Sample s = testing::RandomSample(rng, net.spec.input_size(), net.spec.outputs);
    const LossKind kind = checked % 2 ? LossKind::kSquaredError : LossKind::kSoftmaxCrossEntropy;
    const ForwardTape tape = ForwardSketched(sk, s.features);
    if (NearKink(tape, 1e-3)) continue;
    const Gradients g = BackwardSketched(sk, tape, s, kind);
    for (std::size_t l = 0; l < ops.size(); ++l) {
      const Matrix fd = FiniteDifferenceGradient(
          [&](const Matrix& payload) {
            SketchedNetwork moved = sk;
            moved.layers[l].payload = payload;
            return LossValue(kind, ForwardSketched(moved, s.features).prediction, s);
          },
          sk.layers[l].payload, 1e-5);
      CHECK(RelErr(fd, g.layers[l]) <= 1e-5);
    }
    const Matrix fd_out = FiniteDifferenceGradient(
        [&](const Matrix& a) {
          SketchedNetwork moved = sk;
          moved.output = a;
          return LossValue(kind, ForwardSketched(moved, s.features).prediction, s);
        },
        sk.output, 1e-5);
    CHECK(RelErr(fd_out, g.output) <= 1e-5);
    ++checked;
  }
}

TEST_CASE("recovered gradients match finite differences with respect to W") {
  Rng rng(24);
  int checked = 0;
  while (checked < 20) {
    const NetworkState net = testing::RandomFcNet(rng, 12);
    const auto ops = HalfSketches(net, rng);
    const SketchedNetwork sk = SketchNetwork(net, ops);
    const Sample s = testing::RandomSample(rng, net.spec.input_size(), net.spec.outputs);
    const ForwardTape tape = ForwardSketched(sk, s.features);
    if (NearKink(tape, 1e-3)) continue;
    const Gradients g = BackwardSketched(sk, tape, s, LossKind::kSquaredError);
    for (std::size_t l = 0; l < ops.size(); ++l) {
      const Matrix fd = FiniteDifferenceGradient(
          [&](const Matrix& w) {
            NetworkState moved = net;
            moved.weights[l] = w;
            return SampleLoss(DenseSurrogate(moved, ops), s, LossKind::kSquaredError);
          },
          net.weights[l], 1e-5);
      CHECK(RelErr(fd, RecoverFullGradient(ops[l], g.layers[l])) <= 1e-5);
    }
    ++checked;
  }
}

TEST_CASE("conv sketched gradients match finite differences") {
  Rng rng(25);
  int checked = 0;
  while (checked < 5) {
    const NetworkState net = InitNetwork(TinyConv(), rng.Next());
    const auto ops = HalfSketches(net, rng);
    const SketchedNetwork sk = SketchNetwork(net, ops);
    const Sample s = testing::RandomSample(rng, net.spec.input_size(), net.spec.outputs);
    const ForwardTape tape = ForwardSketched(sk, s.features);
    if (NearKink(tape, 1e-3)) continue;
    const Gradients g = BackwardSketched(sk, tape, s, LossKind::kSoftmaxCrossEntropy);
    for (std::size_t l = 0; l < ops.size(); ++l) {
      const Matrix fd = FiniteDifferenceGradient(
          [&](const Matrix& w) {
            NetworkState moved = net;
            moved.weights[l] = w;
            return SampleLoss(DenseSurrogate(moved, ops), s, LossKind::kSoftmaxCrossEntropy);
          },
          net.weights[l], 1e-5);
      CHECK(RelErr(fd, RecoverFullGradient(ops[l], g.layers[l])) <= 1e-5);
    }
    ++checked;
  }
}

TEST_CASE("dense backward matches finite differences") {
  Rng rng(26);
  int checked = 0;
  while (checked < 10) {
    const NetworkState net = testing::RandomFcNet(rng);
    const Sample s = testing::RandomSample(rng, net.spec.input_size(), net.spec.outputs);
    const ForwardTape tape = Forward(net, s.features);
    if (NearKink(tape, 1e-3)) continue;
    const Gradients g = Backward(net, tape, s, LossKind::kSoftmaxCrossEntropy);
    CHECK(g.loss == doctest::Approx(SampleLoss(net, s, LossKind::kSoftmaxCrossEntropy)));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      const Matrix fd = FiniteDifferenceGradient(
          [&](const Matrix& w) {
            NetworkState moved = net;
            moved.weights[l] = w;
            return SampleLoss(moved, s, LossKind::kSoftmaxCrossEntropy);
          },
          net.weights[l], 1e-5);
      CHECK(RelErr(fd, g.layers[l]) <= 1e-5);
    }
    ++checked;
  }
}

TEST_CASE("recover_full_gradient examples") {
  const SketchOperator op(6, 3, 1);
  CHECK(RecoverFullGradient(op, Matrix(3, 2)) == Matrix(6, 2));
  Rng rng(27);
  const Matrix g = RandomMatrix(rng, 5, 3);
  CHECK(RecoverFullGradient(SketchOperator::Identity(5), g) == g);
  CHECK_THROWS_AS(RecoverFullGradient(op, Matrix(4, 2)), ContractViolation);
}

TEST_CASE("two-sided backward examples") {
  const SketchOperator a(3, 2, 5), b(3, 2, 6);
  CHECK(TwoSidedBackward(a, b, Matrix(2, 2)) == Matrix(3, 3));
  Rng rng(28);
  const Matrix g3 = RandomMatrix(rng, 3, 3);
  CHECK(TwoSidedBackward(SketchOperator::Identity(3), SketchOperator::Identity(3), g3) == g3);

  // vec(H₁ᵀ·g̃·H₂) = (H₂ᵀ ⊗ H₁ᵀ)·vec(g̃), column-major vec.
  for (int trial = 0; trial < 20; ++trial) {
    const SketchOperator op1(3, 2, rng.Next()), op2(3, 2, rng.Next());
    const Matrix gt = RandomMatrix(rng, 2, 2);
    const Matrix h1t = NaiveTranspose(DenseSketch(op1)), h2t = NaiveTranspose(DenseSketch(op2));
    Matrix kron(9, 4);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t p = 0; p < 3; ++p)
          for (std::size_t q = 0; q < 2; ++q) kron(i * 3 + p, j * 2 + q) = h2t(i, j) * h1t(p, q);
    const Vector vec_g = {gt(0, 0), gt(1, 0), gt(0, 1), gt(1, 1)};
    const Vector expect = MatVec(kron, vec_g);
    const Matrix got = TwoSidedBackward(op1, op2, gt);
    for (std::size_t col = 0; col < 3; ++col)
      for (std::size_t row = 0; row < 3; ++row)
        CHECK(std::abs(got(row, col) - expect[col * 3 + row]) <= 1e-12);
  }
}

// --- multi-sketch ------------------------------------------------------------------------

TEST_CASE("multi-sketch forward with one sketch equals the single-sketch forward bitwise") {
  Rng rng(29);
  const NetworkState net = testing::RandomFcNet(rng, 12);
  const auto ops = HalfSketches(net, rng);
  std::vector<MultiSketch> ms;
  for (const auto& op : ops) ms.push_back({{op}});
  const Sample s = testing::RandomSample(rng, net.spec.input_size(), net.spec.outputs);
  const SketchedNetwork single = SketchNetwork(net, ops);
  const MultiSketchedNetwork multi = SketchNetworkMulti(net, ms);
  const ForwardTape a = ForwardSketched(single, s.features);
  const ForwardTape b = ForwardMultiSketched(multi, s.features);
  CHECK(a.prediction == b.prediction);
  const Gradients ga = BackwardSketched(single, a, s, LossKind::kSoftmaxCrossEntropy);
  const MultiGradients gb = BackwardMultiSketched(multi, b, s, LossKind::kSoftmaxCrossEntropy);
  for (std::size_t l = 0; l < ops.size(); ++l) CHECK(ga.layers[l] == gb.layers[l][0]);
  CHECK(ga.output == gb.output);
}

TEST_CASE("multi-sketch gradients match finite differences where the median choice is stable") {
  Rng rng(30);
  int checked = 0, attempts = 0;
  while (checked < 10 && attempts < 500) {
    ++attempts;
    const NetworkState net = testing::RandomFcNet(rng, 10, 2);
    std::vector<MultiSketch> ms;
    for (const Matrix& w : net.weights)
      ms.push_back(MultiSketch::Make(w.rows(), std::max<std::size_t>(1, w.rows() / 2), 3,
                                     rng.Next()));
    const MultiSketchedNetwork sk = SketchNetworkMulti(net, ms);
    const Sample s = testing::RandomSample(rng, net.spec.input_size(), net.spec.outputs);
    const ForwardTape tape = ForwardMultiSketched(sk, s.features);
    if (NearKink(tape, 1e-3)) continue;
    // Selection margin: every median must be at least 1e-4 (10·h·scale)
    // away from the other candidates so the choice cannot flip.
    bool stable = true;
    for (std::size_t l = 0; l < ms.size() && stable; ++l) {
      const Matrix& u = tape.inputs[l];
      std::vector<Vector> cand;
      for (std::size_t j = 0; j < 3; ++j)
        cand.push_back(ApplyTranspose(ms[l].ops[j], MatVec(sk.layers[l].payloads[j], u.data())));
      for (std::size_t i = 0; i < cand[0].size(); ++i) {
        const std::size_t pick = tape.selections[l].lower[i];
        for (std::size_t j = 0; j < 3; ++j)
          if (j != pick && std::abs(cand[j][i] - cand[pick][i]) < 1e-4 &&
              cand[j][i] != cand[pick][i])
            stable = false;
      }
    }
    if (!stable) continue;
    const MultiGradients g = BackwardMultiSketched(sk, tape, s, LossKind::kSquaredError);
    for (std::size_t l = 0; l < ms.size(); ++l) {
      Matrix recovered(net.weights[l].rows(), net.weights[l].cols());
      for (std::size_t j = 0; j < 3; ++j)
        recovered += RecoverFullGradient(ms[l].ops[j], g.layers[l][j]);
      const Matrix fd = FiniteDifferenceGradient(
          [&](const Matrix& w) {
            NetworkState moved = net;
            moved.weights[l] = w;
            return LossValue(LossKind::kSquaredError,
                             ForwardMultiSketched(SketchNetworkMulti(moved, ms), s.features)
                                 .prediction,
                             s);
          },
          net.weights[l], 1e-6);
      CHECK(RelErr(fd, recovered) <= 1e-5);
    }
    ++checked;
  }
  CHECK(checked == 10);
}

TEST_CASE("three identical sketches recover like one") {
  Rng rng(31);
  const NetworkState net = testing::RandomFcNet(rng, 10);
  const auto ops = HalfSketches(net, rng);
  std::vector<MultiSketch> ms;
  for (const auto& op : ops) ms.push_back({{op, op, op}});
  const Vector x = RandomVector(rng, net.spec.input_size());
  CHECK(ForwardMultiSketched(SketchNetworkMulti(net, ms), x).prediction ==
        ForwardSketched(SketchNetwork(net, ops), x).prediction);
}

TEST_CASE("initialisation uses sqrt(2 / fan_in) scaling") {
  const NetworkState net = InitNetwork(NetworkSpec::FullyConnected({400, 300}, 1), 32);
  double sq = 0.0;
  for (double v : net.weights[0].data()) sq += v * v;
  const double var = sq / static_cast<double>(net.weights[0].size());
  CHECK(var == doctest::Approx(2.0 / 400.0).epsilon(0.02));
  CHECK(InitNetwork(net.spec, 32).weights == net.weights);
}

}  // namespace
}  // namespace comfetch
