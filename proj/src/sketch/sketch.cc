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

#include "comfetch/sketch.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <string>

#include "comfetch/errors.h"
#include "comfetch/random.h"

namespace comfetch {

namespace {

constexpr std::uint64_t kBucketSalt = 0x42554b4554ULL;  // "BUKET"
constexpr std::uint64_t kSignSalt = 0x5349474eULL;  // "SIGN"

std::string Dims(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

}  // namespace

SketchOperator::SketchOperator(std::size_t d, std::size_t c, std::uint64_t seed)
    : c_(c), seed_(seed), hashed_(true) {
  COMFETCH_REQUIRE(c >= 1, "sketch length must be positive");
  COMFETCH_REQUIRE(c <= d, "sketch length " + std::to_string(c) +
                               " exceeds source dimension " + std::to_string(d));
  const std::uint64_t bucket_key = DeriveSeed(seed, {kBucketSalt});
  const std::uint64_t sign_key = DeriveSeed(seed, {kSignSalt});
  buckets_.resize(d);
  signs_.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const std::uint64_t hj = Mix64(bucket_key ^ Mix64(j));
    buckets_[j] = static_cast<std::uint32_t>(hj % c);
    const std::uint64_t sj = Mix64(sign_key ^ Mix64(j));
    signs_[j] = (sj >> 63) != 0 ? -1 : 1;
  }
}

SketchOperator SketchOperator::FromTables(std::size_t c,
                                          std::vector<std::uint32_t> buckets,
                                          std::vector<std::int8_t> signs) {
  COMFETCH_REQUIRE(c >= 1 && c <= buckets.size(), "need 1 <= c <= d");
  COMFETCH_REQUIRE(buckets.size() == signs.size(), "table length mismatch");
  for (std::size_t j = 0; j < buckets.size(); ++j) {
    COMFETCH_REQUIRE(buckets[j] < c, "bucket out of range at " + std::to_string(j));
    COMFETCH_REQUIRE(signs[j] == 1 || signs[j] == -1,
                     "sign must be +-1 at " + std::to_string(j));
  }
  SketchOperator op;
  op.c_ = c;
  op.buckets_ = std::move(buckets);
  op.signs_ = std::move(signs);
  return op;
}

SketchOperator SketchOperator::Identity(std::size_t d) {
  std::vector<std::uint32_t> buckets(d);
  std::iota(buckets.begin(), buckets.end(), 0u);
  return FromTables(d, std::move(buckets), std::vector<std::int8_t>(d, 1));
}

std::vector<std::size_t> SketchOperator::BucketSizes() const {
  std::vector<std::size_t> sizes(c_, 0);
  for (std::uint32_t b : buckets_) ++sizes[b];
  return sizes;
}

MultiSketch MultiSketch::Make(std::size_t d, std::size_t c, std::size_t k,
                              std::uint64_t base_seed) {
  COMFETCH_REQUIRE(k >= 1, "need at least one sketch");
  MultiSketch ms;
  ms.ops.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    ms.ops.emplace_back(d, c, DeriveSeed(base_seed, {i}));
  return ms;
}

Vector Apply(const SketchOperator& op, std::span<const double> x) {
  COMFETCH_REQUIRE(x.size() == op.source_dim(), Dims(x.size(), op.source_dim()));
  Vector out(op.sketch_dim(), 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) out[op.bucket(j)] += op.sign(j) * x[j];
  return out;
}

Vector ApplyTranspose(const SketchOperator& op, std::span<const double> y) {
  COMFETCH_REQUIRE(y.size() == op.sketch_dim(), Dims(y.size(), op.sketch_dim()));
  Vector out(op.source_dim());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = op.sign(j) * y[op.bucket(j)];
  return out;
}

Matrix SketchMatrix(const SketchOperator& op, const Matrix& w) {
  COMFETCH_REQUIRE(w.rows() == op.source_dim(), Dims(w.rows(), op.source_dim()));
  Matrix out(op.sketch_dim(), w.cols());
  for (std::size_t j = 0; j < w.rows(); ++j) {
    const double s = op.sign(j);
    auto dst = out.row(op.bucket(j));
    auto src = w.row(j);
    for (std::size_t n = 0; n < w.cols(); ++n) dst[n] += s * src[n];
  }
  return out;
}

Matrix UnsketchMatrix(const SketchOperator& op, const Matrix& s) {
  COMFETCH_REQUIRE(s.rows() == op.sketch_dim(), Dims(s.rows(), op.sketch_dim()));
  Matrix out(op.source_dim(), s.cols());
  for (std::size_t j = 0; j < op.source_dim(); ++j) {
    const double sg = op.sign(j);
    auto dst = out.row(j);
    auto src = s.row(op.bucket(j));
    for (std::size_t n = 0; n < s.cols(); ++n) dst[n] = sg * src[n];
  }
  return out;
}

Matrix SketchColumns(const SketchOperator& op, const Matrix& w) {
  COMFETCH_REQUIRE(w.cols() == op.source_dim(), Dims(w.cols(), op.source_dim()));
  Matrix out(w.rows(), op.sketch_dim());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto dst = out.row(r);
    auto src = w.row(r);
    for (std::size_t j = 0; j < w.cols(); ++j) dst[op.bucket(j)] += op.sign(j) * src[j];
  }
  return out;
}

Matrix UnsketchColumns(const SketchOperator& op, const Matrix& s) {
  COMFETCH_REQUIRE(s.cols() == op.sketch_dim(), Dims(s.cols(), op.sketch_dim()));
  Matrix out(s.rows(), op.source_dim());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto dst = out.row(r);
    auto src = s.row(r);
    for (std::size_t j = 0; j < op.source_dim(); ++j) dst[j] = op.sign(j) * src[op.bucket(j)];
  }
  return out;
}

Matrix Materialize(const SketchOperator& op) {
  Matrix h(op.sketch_dim(), op.source_dim());
  for (std::size_t j = 0; j < op.source_dim(); ++j) h(op.bucket(j), j) = op.sign(j);
  return h;
}

SketchedWeight MakeSketchedWeight(SketchOperator op, const Matrix& w) {
  Matrix payload = SketchMatrix(op, w);
  return {std::move(op), std::move(payload)};
}

MedianSelection SelectMedian(std::span<const Matrix> candidates) {
  COMFETCH_REQUIRE(!candidates.empty(), "no candidates");
  const std::size_t k = candidates.size();
  COMFETCH_REQUIRE(k <= 65535, "too many candidates");
  for (const Matrix& m : candidates)
    COMFETCH_REQUIRE(m.SameShape(candidates[0]), "candidate shapes differ");

  MedianSelection sel;
  const std::size_t n = candidates[0].size();
  sel.lower.assign(n, 0);
  sel.upper.assign(n, 0);
  if (k == 1) {
    sel.value = candidates[0];
    return sel;
  }
  sel.value = Matrix(candidates[0].rows(), candidates[0].cols());
  std::vector<std::uint16_t> order(k);
  for (std::size_t e = 0; e < n; ++e) {
    std::iota(order.begin(), order.end(), std::uint16_t{0});
    std::sort(order.begin(), order.end(), [&](std::uint16_t a, std::uint16_t b) {
      const double va = candidates[a].data()[e];
      const double vb = candidates[b].data()[e];
      return va < vb || (va == vb && a < b);
    });
    const std::uint16_t hi = order[k / 2];
    const std::uint16_t lo = (k % 2 == 1) ? hi : order[k / 2 - 1];
    sel.lower[e] = lo;
    sel.upper[e] = hi;
    sel.value.data()[e] = lo == hi ? candidates[hi].data()[e]
                                   : 0.5 * (candidates[lo].data()[e] +
                                            candidates[hi].data()[e]);
  }
  return sel;
}

Matrix RecoverMedian(const MultiSketch& ms, std::span<const Matrix> sketches) {
  COMFETCH_REQUIRE(sketches.size() == ms.k(),
                   "got " + std::to_string(sketches.size()) + " sketches for " +
                       std::to_string(ms.k()) + " operators");
  std::vector<Matrix> estimates;
  estimates.reserve(ms.k());
  for (std::size_t i = 0; i < ms.k(); ++i)
    estimates.push_back(UnsketchMatrix(ms.ops[i], sketches[i]));
  return SelectMedian(estimates).value;
}

Matrix TwoSidedSketch(const SketchOperator& op1, const SketchOperator& op2,
                      const Matrix& w) {
  COMFETCH_REQUIRE(w.rows() == w.cols(), "two-sided sketch needs a square matrix");
  return SketchColumns(op2, SketchMatrix(op1, w));
}

Matrix TwoSidedRecover(const SketchOperator& op1, const SketchOperator& op2,
                       const Matrix& s) {
  return UnsketchColumns(op2, UnsketchMatrix(op1, s));
}

Matrix TwoSidedRecoverMedian(const MultiSketch& left, const MultiSketch& right,
                             std::span<const Matrix> sketches) {
  COMFETCH_REQUIRE(left.k() == right.k() && sketches.size() == left.k(),
                   "sketch count mismatch");
  std::vector<Matrix> estimates;
  estimates.reserve(left.k());
  for (std::size_t i = 0; i < left.k(); ++i)
    estimates.push_back(TwoSidedRecover(left.ops[i], right.ops[i], sketches[i]));
  return SelectMedian(estimates).value;
}

// --- wire format -------------------------------------------------------------

namespace {

void PutU64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t GetU64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t WireBytes(std::size_t c, std::size_t n) { return 24 + 4 * c * n; }

std::vector<std::uint8_t> SerializeSketchedWeight(const SketchedWeight& sw) {
  COMFETCH_REQUIRE(sw.op.hashed(), "table-built operators have no descriptor");
  COMFETCH_REQUIRE(sw.payload.rows() == sw.op.sketch_dim(), "payload/operator mismatch");
  std::vector<std::uint8_t> out;
  out.reserve(WireBytes(sw.payload.rows(), sw.payload.cols()));
  const SketchDescriptor desc = sw.op.descriptor();
  PutU64(out, desc.d);
  PutU64(out, desc.c);
  PutU64(out, desc.seed);
  for (double v : sw.payload.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

SketchedWeight DeserializeSketchedWeight(std::span<const std::uint8_t> bytes) {
  COMFETCH_REQUIRE(bytes.size() >= 24, "truncated descriptor");
  const SketchDescriptor desc{GetU64(bytes, 0), GetU64(bytes, 8), GetU64(bytes, 16)};
  const std::size_t payload_bytes = bytes.size() - 24;
  COMFETCH_REQUIRE(desc.c > 0 && payload_bytes % (4 * desc.c) == 0,
                   "payload length is not a multiple of 4*c");
  const std::size_t n = payload_bytes / (4 * desc.c);
  SketchOperator op(desc.d, desc.c, desc.seed);
  Matrix payload(desc.c, n);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(bytes[24 + 4 * i + b]) << (8 * b);
    payload.data()[i] = std::bit_cast<float>(bits);
  }
  return {std::move(op), std::move(payload)};
}

}  // namespace comfetch
