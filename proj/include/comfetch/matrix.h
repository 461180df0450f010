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
// Dense row-major matrices and the handful of linear-algebra kernels the rest
// of the library needs. Everything is 64-bit; nothing here tries to be fast.

#ifndef COMFETCH_MATRIX_H_
#define COMFETCH_MATRIX_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace comfetch {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix Identity(std::size_t n);
  static Matrix FromRows(std::initializer_list<std::initializer_list<double>> rows);
  /// n×1 matrix holding `v`.
  static Matrix Column(const Vector& v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix Transposed() const;
  bool SameShape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// a·b. Throws ContractViolation when a.cols != b.rows.
Matrix MatMul(const Matrix& a, const Matrix& b);
/// aᵀ·b without forming aᵀ.
Matrix MatMulTransA(const Matrix& a, const Matrix& b);
/// a·bᵀ without forming bᵀ.
Matrix MatMulTransB(const Matrix& a, const Matrix& b);
Vector MatVec(const Matrix& a, std::span<const double> x);
Vector MatTVec(const Matrix& a, std::span<const double> x);

double Dot(std::span<const double> a, std::span<const double> b);
double SquaredNorm(std::span<const double> v);
double L2Norm(std::span<const double> v);
double FrobeniusNorm(const Matrix& m);
/// Largest |a_i - b_i|; sizes must agree.
double MaxAbsDiff(std::span<const double> a, std::span<const double> b);
bool AllFinite(std::span<const double> v);

struct SpectralNormResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Largest singular value by power iteration on mᵀm. When the iteration
/// budget runs out the best estimate is returned with `converged == false`.
SpectralNormResult SpectralNorm(const Matrix& m, int max_iters = 2000,
                                double tol = 1e-13);

/// Odd count: middle order statistic. Even count: mean of the two middle ones.
double MedianOf(std::span<const double> values);

}  // namespace comfetch

#endif  // COMFETCH_MATRIX_H_
