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
#include <cstring>
#include <numeric>

#include "comfetch/errors.h"
#include "comfetch/random.h"
#include "comfetch/sketch.h"
#include "test_util.h"

namespace comfetch {
namespace {

using testing::DenseSketch;
using testing::MaxDiff;
using testing::NaiveMatMul;
using testing::NaiveTranspose;
using testing::RandomMatrix;
using testing::RandomVector;

Vector Basis(std::size_t n, std::size_t i) {
  Vector e(n, 0.0);
  e[i] = 1.0;
  return e;
}

Vector ToVector(const Matrix& column) { return column.data(); }

TEST_CASE("identity operator gives HᵀH = I") {
  const SketchOperator id = SketchOperator::Identity(4);
  const Matrix h = Materialize(id);
  CHECK(MatMulTransA(h, h) == Matrix::Identity(4));
  CHECK_FALSE(id.hashed());
}

TEST_CASE("bucket sizes cover every coordinate") {
  const SketchOperator op(1000, 10, 7);
  const auto sizes = op.BucketSizes();
  CHECK(sizes.size() == 10);
  CHECK(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == 1000);
  for (std::size_t s : sizes) CHECK(s > 50);  // a usable hash spreads the load
}

TEST_CASE("different seeds give different bucket maps") {
  const SketchOperator a(64, 8, 1), b(64, 8, 2);
  bool differ = false;
  for (std::size_t j = 0; j < 64; ++j) differ |= a.bucket(j) != b.bucket(j);
  CHECK(differ);
}

TEST_CASE("same seed reproduces the operator") {
  CHECK(SketchOperator(300, 17, 99) == SketchOperator(300, 17, 99));
  const SketchOperator op(300, 17, 99);
  CHECK(op.descriptor() == SketchDescriptor{300, 17, 99});
}

TEST_CASE("hashed signs take both values") {
  const SketchOperator op(512, 32, 3);
  int plus = 0;
  for (std::size_t j = 0; j < 512; ++j) plus += op.sign(j) > 0 ? 1 : 0;
  CHECK(plus > 200);
  CHECK(plus < 312);
}

TEST_CASE("operator construction rejects bad lengths") {
  CHECK_THROWS_AS(SketchOperator(4, 5, 1), ContractViolation);
  CHECK_THROWS_AS(SketchOperator(4, 0, 1), ContractViolation);
  CHECK_THROWS_AS(SketchOperator::FromTables(2, {0, 2}, {1, 1}), ContractViolation);
  CHECK_THROWS_AS(SketchOperator::FromTables(2, {0, 1}, {1, 0}), ContractViolation);
  CHECK_THROWS_AS(MultiSketch::Make(8, 4, 0, 1), ContractViolation);
}

TEST_CASE("materialized H has one signed unit per column and row counts equal bucket sizes") {
  const SketchOperator op(40, 7, 11);
  const Matrix h = Materialize(op);
  CHECK(h == DenseSketch(op));
  for (std::size_t j = 0; j < 40; ++j) {
    int nonzero = 0;
    for (std::size_t b = 0; b < 7; ++b) {
      if (h(b, j) != 0.0) {
        ++nonzero;
        CHECK(std::abs(h(b, j)) == 1.0);
      }
    }
    CHECK(nonzero == 1);
  }
  const auto sizes = op.BucketSizes();
  for (std::size_t b = 0; b < 7; ++b) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < 40; ++j) count += h(b, j) != 0.0 ? 1 : 0;
    CHECK(count == sizes[b]);
  }
}

TEST_CASE("apply on basis and zero vectors") {
  const SketchOperator op(12, 5, 4);
  for (std::size_t j = 0; j < 12; ++j) {
    const Vector y = Apply(op, Basis(12, j));
    for (std::size_t b = 0; b < 5; ++b)
      CHECK(y[b] == (b == op.bucket(j) ? static_cast<double>(op.sign(j)) : 0.0));
  }
  for (double v : Apply(op, Vector(12, 0.0))) CHECK(v == 0.0);
}

TEST_CASE("apply and apply_transpose equal the materialized products") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = testing::RandomIn(rng, 1, 20);
    const SketchOperator op(d, testing::RandomIn(rng, 1, d), rng.Next());
    const Matrix h = DenseSketch(op);
    const Vector x = RandomVector(rng, d);
    CHECK(Apply(op, x) == ToVector(NaiveMatMul(h, Matrix::Column(x))));
    const Vector y = RandomVector(rng, op.sketch_dim());
    CHECK(ApplyTranspose(op, y) == ToVector(NaiveMatMul(NaiveTranspose(h), Matrix::Column(y))));
  }
}

TEST_CASE("apply_transpose of a bucket basis vector marks that bucket's members") {
  const SketchOperator op(30, 4, 5);
  for (std::size_t b = 0; b < 4; ++b) {
    const Vector x = ApplyTranspose(op, Basis(4, b));
    for (std::size_t j = 0; j < 30; ++j)
      CHECK(x[j] == (op.bucket(j) == b ? static_cast<double>(op.sign(j)) : 0.0));
  }
}

TEST_CASE("unsketching a sketched basis vector leaks only within its bucket") {
  const SketchOperator op(30, 6, 8);
  for (std::size_t j = 0; j < 30; ++j) {
    const Vector back = ApplyTranspose(op, Apply(op, Basis(30, j)));
    CHECK(back[j] == 1.0);
    for (std::size_t i = 0; i < 30; ++i)
      if (op.bucket(i) != op.bucket(j)) CHECK(back[i] == 0.0);
  }
}

TEST_CASE("length mismatches are contract violations") {
  const SketchOperator op(6, 3, 1);
  CHECK_THROWS_AS(Apply(op, Vector(5)), ContractViolation);
  CHECK_THROWS_AS(ApplyTranspose(op, Vector(6)), ContractViolation);
  CHECK_THROWS_AS(SketchMatrix(op, Matrix(5, 2)), ContractViolation);
  CHECK_THROWS_AS(UnsketchMatrix(op, Matrix(6, 2)), ContractViolation);
}

TEST_CASE("property: apply is exactly linear on integer data") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = testing::RandomIn(rng, 2, 40);
    const SketchOperator op(d, testing::RandomIn(rng, 1, d), rng.Next());
    Vector x(d), y(d), mix(d);
    const double alpha = static_cast<double>(rng.Index(7)) - 3.0;
    const double beta = static_cast<double>(rng.Index(7)) - 3.0;
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = static_cast<double>(rng.Index(21)) - 10.0;
      y[j] = static_cast<double>(rng.Index(21)) - 10.0;
      mix[j] = alpha * x[j] + beta * y[j];
    }
    const Vector hx = Apply(op, x), hy = Apply(op, y), hm = Apply(op, mix);
    for (std::size_t b = 0; b < op.sketch_dim(); ++b) CHECK(hm[b] == alpha * hx[b] + beta * hy[b]);
  }
}

TEST_CASE("sketch_matrix examples") {
  const SketchOperator id = SketchOperator::Identity(5);
  CHECK(SketchMatrix(id, Matrix::Identity(5)) == Materialize(id));
  const SketchOperator op(16, 4, 21);
  CHECK(SketchMatrix(op, Matrix(16, 5)) == Matrix(4, 5));
  Rng rng(14);
  const Matrix w = RandomMatrix(rng, 16, 5);
  CHECK(MaxDiff(SketchMatrix(op, w), NaiveMatMul(DenseSketch(op), w)) == 0.0);
  const Matrix s = RandomMatrix(rng, 4, 5);
  CHECK(MaxDiff(UnsketchMatrix(op, s), NaiveMatMul(NaiveTranspose(DenseSketch(op)), s)) == 0.0);
}

TEST_CASE("column sketches equal right multiplication by Hᵀ and H") {
  Rng rng(15);
  const SketchOperator op(9, 4, 2);
  const Matrix w = RandomMatrix(rng, 3, 9);
  CHECK(MaxDiff(SketchColumns(op, w), NaiveMatMul(w, NaiveTranspose(DenseSketch(op)))) < 1e-15);
  const Matrix s = RandomMatrix(rng, 3, 4);
  CHECK(MaxDiff(UnsketchColumns(op, s), NaiveMatMul(s, DenseSketch(op))) < 1e-15);
}

TEST_CASE("median selection follows the parity rule and records its choice") {
  const std::vector<Matrix> odd = {Matrix::FromRows({{3, 0}}), Matrix::FromRows({{1, 0}}),
                                   Matrix::FromRows({{2, 0}})};
  const MedianSelection s = SelectMedian(odd);
  CHECK(s.value == Matrix::FromRows({{2, 0}}));
  CHECK(s.lower[0] == 2);
  CHECK(s.upper[0] == 2);
  // All-equal entries: ties go to the lowest candidate index.
  CHECK(s.lower[1] == 1);

  const std::vector<Matrix> even = {Matrix::FromRows({{4}}), Matrix::FromRows({{1}}),
                                    Matrix::FromRows({{3}}), Matrix::FromRows({{2}})};
  const MedianSelection e = SelectMedian(even);
  CHECK(e.value(0, 0) == 2.5);
  CHECK(e.lower[0] == 3);
  CHECK(e.upper[0] == 2);
}

TEST_CASE("recover_median with one sketch is exactly HᵀHW") {
  Rng rng(16);
  const MultiSketch ms = MultiSketch::Make(20, 6, 1, 3);
  const Matrix w = RandomMatrix(rng, 20, 4);
  const std::vector<Matrix> sk = {SketchMatrix(ms.ops[0], w)};
  CHECK(RecoverMedian(ms, sk) == UnsketchMatrix(ms.ops[0], SketchMatrix(ms.ops[0], w)));
}

TEST_CASE("recover_median of a zero matrix is zero for any k") {
  for (std::size_t k : {1u, 2u, 5u}) {
    const MultiSketch ms = MultiSketch::Make(10, 3, k, k);
    std::vector<Matrix> sk;
    for (const auto& op : ms.ops) sk.push_back(SketchMatrix(op, Matrix(10, 2)));
    CHECK(RecoverMedian(ms, sk) == Matrix(10, 2));
  }
}

TEST_CASE("recover_median with three identical operators equals the single-sketch result") {
  Rng rng(17);
  const SketchOperator op(24, 8, 5);
  const MultiSketch ms{{op, op, op}};
  const Matrix w = RandomMatrix(rng, 24, 3);
  const Matrix s = SketchMatrix(op, w);
  const std::vector<Matrix> sk = {s, s, s};
  CHECK(RecoverMedian(ms, sk) == UnsketchMatrix(op, s));
  CHECK_THROWS_AS(RecoverMedian(ms, std::vector<Matrix>{s, s}), ContractViolation);
}

TEST_CASE("multi-sketch operators use distinct derived seeds") {
  const MultiSketch ms = MultiSketch::Make(32, 8, 4, 77);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ms.ops[i].seed() == DeriveSeed(77, {i}));
    for (std::size_t j = 0; j < i; ++j) CHECK(ms.ops[i].seed() != ms.ops[j].seed());
  }
}

// A planted heavy entry survives median-of-9 recovery at the sizing
// c = ceil(20·‖W‖_F²/ε²).
TEST_CASE("planted heavy entry is recovered within epsilon") {
  constexpr std::size_t kD = 256, kN = 2, kK = 9, kTrials = 1000;
  constexpr double kEps = 0.5, kDelta = 0.05;
  Rng rng(18);
  std::size_t failures = 0;
  for (std::size_t t = 0; t < kTrials; ++t) {
    Matrix w = RandomMatrix(rng, kD, kN, 0.02);
    const std::size_t row = rng.Index(kD), col = rng.Index(kN);
    w(row, col) = 1.0;
    const double f = FrobeniusNorm(w);
    const auto c = std::min<std::size_t>(kD, static_cast<std::size_t>(
                                                 std::ceil(20.0 * f * f / (kEps * kEps))));
    REQUIRE(c < kD);
    const MultiSketch ms = MultiSketch::Make(kD, c, kK, rng.Next());
    std::vector<Matrix> sk;
    for (const auto& op : ms.ops) sk.push_back(SketchMatrix(op, w));
    failures += std::abs(RecoverMedian(ms, sk)(row, col) - 1.0) > kEps ? 1 : 0;
  }
  CHECK(static_cast<double>(failures) / kTrials <= kDelta);
}

TEST_CASE("two-sided sketch examples") {
  Rng rng(19);
  const SketchOperator id = SketchOperator::Identity(6);
  const Matrix w6 = RandomMatrix(rng, 6, 6);
  CHECK(TwoSidedRecover(id, id, TwoSidedSketch(id, id, w6)) == w6);

  const SketchOperator a(8, 4, 1), b(8, 4, 2);
  CHECK(TwoSidedRecover(a, b, TwoSidedSketch(a, b, Matrix(8, 8))) == Matrix(8, 8));

  const Matrix w = RandomMatrix(rng, 8, 8);
  const Matrix ha = DenseSketch(a), hb = DenseSketch(b);
  const Matrix ra = NaiveMatMul(NaiveTranspose(ha), ha), rb = NaiveMatMul(NaiveTranspose(hb), hb);
  const Matrix expect = NaiveMatMul(NaiveMatMul(ra, w), rb);
  CHECK(MaxDiff(TwoSidedRecover(a, b, TwoSidedSketch(a, b, w)), expect) < 1e-12);
  CHECK(MaxDiff(TwoSidedSketch(a, b, w), NaiveMatMul(NaiveMatMul(ha, w), NaiveTranspose(hb))) <
        1e-12);
  CHECK_THROWS_AS(TwoSidedSketch(a, b, Matrix(8, 7)), ContractViolation);

  const MultiSketch left{{a}}, right{{b}};
  const std::vector<Matrix> sk = {TwoSidedSketch(a, b, w)};
  CHECK(TwoSidedRecoverMedian(left, right, sk) == TwoSidedRecover(a, b, sk[0]));
}

TEST_CASE("property: Count Sketch recovery is unbiased") {
  constexpr std::size_t kD = 16, kC = 4, kSeeds = 10000;
  Rng rng(20);
  const Vector x = RandomVector(rng, kD);
  Vector sum(kD, 0.0), sum_sq(kD, 0.0);
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const SketchOperator op(kD, kC, DeriveSeed(1234, {s}));
    const Vector est = ApplyTranspose(op, Apply(op, x));
    for (std::size_t j = 0; j < kD; ++j) {
      sum[j] += est[j];
      sum_sq[j] += est[j] * est[j];
    }
  }
  for (std::size_t j = 0; j < kD; ++j) {
    const double mean = sum[j] / kSeeds;
    const double var = sum_sq[j] / kSeeds - mean * mean;
    const double se = std::sqrt(var / kSeeds);
    CHECK(std::abs(mean - x[j]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("property: HᵀH spectral norm is the largest bucket and Frobenius norm follows the "
          "bucket sizes") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = testing::RandomIn(rng, 2, 40);
    const SketchOperator op(d, testing::RandomIn(rng, 1, d), rng.Next());
    const Matrix h = DenseSketch(op);
    const Matrix r = NaiveMatMul(NaiveTranspose(h), h);
    double frob_sq = 0.0;
    std::size_t largest = 0;
    for (std::size_t s : op.BucketSizes()) {
      frob_sq += static_cast<double>(s * s);
      largest = std::max(largest, s);
    }
    CHECK(FrobeniusNorm(r) == doctest::Approx(std::sqrt(frob_sq)).epsilon(1e-14));
    const double spec = SpectralNorm(r).value;
    CHECK(spec <= FrobeniusNorm(r) * (1.0 + 1e-12));
    CHECK(spec == doctest::Approx(static_cast<double>(largest)).epsilon(1e-8));
  }
}

TEST_CASE("wire format round trip") {
  Rng rng(22);
  const SketchOperator op(10, 3, 0x0123456789abcdefULL);
  const SketchedWeight sw = MakeSketchedWeight(op, RandomMatrix(rng, 10, 4));
  const std::vector<std::uint8_t> bytes = SerializeSketchedWeight(sw);
  CHECK(bytes.size() == WireBytes(3, 4));
  CHECK(bytes.size() == 24 + 4 * 3 * 4);
  CHECK(bytes[0] == 10);
  CHECK(bytes[8] == 3);
  CHECK(bytes[16] == 0xef);
  CHECK(bytes[23] == 0x01);

  const SketchedWeight back = DeserializeSketchedWeight(bytes);
  CHECK(back.op == op);
  REQUIRE(back.payload.rows() == 3);
  REQUIRE(back.payload.cols() == 4);
  for (std::size_t i = 0; i < back.payload.size(); ++i)
    CHECK(back.payload.data()[i] == static_cast<double>(static_cast<float>(sw.payload.data()[i])));

  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(DeserializeSketchedWeight(cut), ContractViolation);
  CHECK_THROWS_AS(DeserializeSketchedWeight(std::vector<std::uint8_t>(10)), ContractViolation);
  CHECK_THROWS_AS(SerializeSketchedWeight(
                      MakeSketchedWeight(SketchOperator::Identity(3), Matrix(3, 1))),
                  ContractViolation);
}

}  // namespace
}  // namespace comfetch
