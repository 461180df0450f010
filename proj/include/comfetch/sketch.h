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
// Count Sketch operators.
//
// A SketchOperator is the implicit c×d matrix H with exactly one ±1 per
// column: H(b, j) = s(j) when h(j) == b. Only the bucket map h and the sign
// map s (length d each) are stored, so applying H, Hᵀ, or sketching the rows
// of a d×n matrix never allocates anything of size d×d.

#ifndef COMFETCH_SKETCH_H_
#define COMFETCH_SKETCH_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "comfetch/matrix.h"

namespace comfetch {

struct SketchDescriptor {
  std::uint64_t d = 0;
  std::uint64_t c = 0;
  std::uint64_t seed = 0;
  bool operator==(const SketchDescriptor&) const = default;
};

class SketchOperator {
 public:
  /// Hashed operator. Same (d, c, seed) gives the same maps on every
  /// platform. Requires 1 <= c <= d.
  SketchOperator(std::size_t d, std::size_t c, std::uint64_t seed);

  /// Operator with explicit bucket/sign tables. Meant for tests and for the
  /// identity-hash degeneracy runs; such operators carry no seed and cannot
  /// be rebuilt from a descriptor.
  static SketchOperator FromTables(std::size_t c, std::vector<std::uint32_t> buckets,
                                   std::vector<std::int8_t> signs);
  /// h(j) = j, s(j) = +1, so HᵀH = I.
  static SketchOperator Identity(std::size_t d);

  std::size_t source_dim() const { return buckets_.size(); }
  std::size_t sketch_dim() const { return c_; }
  std::uint64_t seed() const { return seed_; }
  bool hashed() const { return hashed_; }
  SketchDescriptor descriptor() const { return {source_dim(), c_, seed_}; }

  std::uint32_t bucket(std::size_t j) const { return buckets_[j]; }
  int sign(std::size_t j) const { return signs_[j]; }
  std::span<const std::uint32_t> buckets() const { return buckets_; }
  std::span<const std::int8_t> signs() const { return signs_; }

  /// |{j : h(j) = b}| for every bucket b.
  std::vector<std::size_t> BucketSizes() const;

  bool operator==(const SketchOperator&) const = default;

 private:
  SketchOperator() = default;

  std::size_t c_ = 0;
  std::uint64_t seed_ = 0;
  bool hashed_ = false;
  std::vector<std::uint32_t> buckets_;
  std::vector<std::int8_t> signs_;
};

/// Independent operators over the same (d, c), one per sketch.
struct MultiSketch {
  std::vector<SketchOperator> ops;

  /// Operator i is seeded with DeriveSeed(base_seed, {i}).
  static MultiSketch Make(std::size_t d, std::size_t c, std::size_t k,
                          std::uint64_t base_seed);
  std::size_t k() const { return ops.size(); }
};

/// What a client stores for one layer: the operator (rebuildable from its
/// descriptor) and the product H·W.
struct SketchedWeight {
  SketchOperator op;
  Matrix payload;
};

/// H·x.
Vector Apply(const SketchOperator& op, std::span<const double> x);
/// Hᵀ·y.
Vector ApplyTranspose(const SketchOperator& op, std::span<const double> y);
/// H·W for W of shape d×n; the result is c×n.
Matrix SketchMatrix(const SketchOperator& op, const Matrix& w);
/// Hᵀ·S for S of shape c×n; the result is d×n.
Matrix UnsketchMatrix(const SketchOperator& op, const Matrix& s);
/// W·Hᵀ for W of shape m×d; the result is m×c.
Matrix SketchColumns(const SketchOperator& op, const Matrix& w);
/// S·H for S of shape m×c; the result is m×d.
Matrix UnsketchColumns(const SketchOperator& op, const Matrix& s);
/// Dense H. Test-scale only.
Matrix Materialize(const SketchOperator& op);

SketchedWeight MakeSketchedWeight(SketchOperator op, const Matrix& w);

/// Coordinate-wise median of k same-shape candidates, plus which candidates
/// produced it. For odd k lower == upper; for even k the value is the mean of
/// the two middle candidates. Ties are ordered by candidate index.
struct MedianSelection {
  Matrix value;
  std::vector<std::uint16_t> lower;
  std::vector<std::uint16_t> upper;
};
MedianSelection SelectMedian(std::span<const Matrix> candidates);

/// Ŵ(m, n) = median_i (H_iᵀ·sketch_i)(m, n).
Matrix RecoverMedian(const MultiSketch& ms, std::span<const Matrix> sketches);

/// H₁·W·H₂ᵀ for square W (side d). op1 is c₁×d, op2 is c₂×d.
Matrix TwoSidedSketch(const SketchOperator& op1, const SketchOperator& op2,
                      const Matrix& w);
/// H₁ᵀ·S·H₂, i.e. (H₁ᵀH₁)W(H₂ᵀH₂) when S came from TwoSidedSketch.
Matrix TwoSidedRecover(const SketchOperator& op1, const SketchOperator& op2,
                       const Matrix& s);
/// Median over k operator pairs of TwoSidedRecover.
Matrix TwoSidedRecoverMedian(const MultiSketch& left, const MultiSketch& right,
                             std::span<const Matrix> sketches);

// Wire format for a sketched weight: d, c, seed as little-endian u64, then
// the c×n payload as little-endian IEEE-754 binary32, row-major.
std::size_t WireBytes(std::size_t c, std::size_t n);
std::vector<std::uint8_t> SerializeSketchedWeight(const SketchedWeight& sw);
SketchedWeight DeserializeSketchedWeight(std::span<const std::uint8_t> bytes);

}  // namespace comfetch

#endif  // COMFETCH_SKETCH_H_
