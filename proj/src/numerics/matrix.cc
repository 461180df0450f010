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

#include "comfetch/matrix.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "comfetch/errors.h"

namespace comfetch {

namespace {

std::string Shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  COMFETCH_REQUIRE(data_.size() == rows * cols,
                   "data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows) + "x" +
                       std::to_string(cols));
}

Matrix Matrix::Identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::FromRows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    COMFETCH_REQUIRE(row.size() == c, "ragged row list");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::Column(const Vector& v) { return Matrix(v.size(), 1, v); }

Matrix Matrix::Transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  COMFETCH_REQUIRE(SameShape(o), Shape(*this) + " vs " + Shape(o));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  COMFETCH_REQUIRE(SameShape(o), Shape(*this) + " vs " + Shape(o));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix MatMul(const Matrix& a, const Matrix& b) {
  COMFETCH_REQUIRE(a.cols() == b.rows(), Shape(a) + " times " + Shape(b));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix MatMulTransA(const Matrix& a, const Matrix& b) {
  COMFETCH_REQUIRE(a.rows() == b.rows(), Shape(a) + "^T times " + Shape(b));
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix MatMulTransB(const Matrix& a, const Matrix& b) {
  COMFETCH_REQUIRE(a.cols() == b.cols(), Shape(a) + " times " + Shape(b) + "^T");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = Dot(a.row(i), b.row(j));
  return out;
}

Vector MatVec(const Matrix& a, std::span<const double> x) {
  COMFETCH_REQUIRE(a.cols() == x.size(), Shape(a) + " times vector of " +
                                             std::to_string(x.size()));
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = Dot(a.row(i), x);
  return out;
}

Vector MatTVec(const Matrix& a, std::span<const double> x) {
  COMFETCH_REQUIRE(a.rows() == x.size(), Shape(a) + "^T times vector of " +
                                             std::to_string(x.size()));
  Vector out(a.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    auto a_row = a.row(k);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += xk * a_row[j];
  }
  return out;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  COMFETCH_REQUIRE(a.size() == b.size(), "length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double SquaredNorm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Scaled so tiny and huge entries neither underflow nor overflow.
double L2Norm(std::span<const double> v) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double sum = 0.0;
  for (double x : v) {
    const double r = x / scale;
    sum += r * r;
  }
  return scale * std::sqrt(sum);
}

double FrobeniusNorm(const Matrix& m) { return L2Norm(m.data()); }

double MaxAbsDiff(std::span<const double> a, std::span<const double> b) {
  COMFETCH_REQUIRE(a.size() == b.size(), "length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

bool AllFinite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

SpectralNormResult SpectralNorm(const Matrix& m, int max_iters, double tol) {
  COMFETCH_REQUIRE(!m.empty(), "empty matrix");
  SpectralNormResult result;
  if (FrobeniusNorm(m) == 0.0) {
    result.converged = true;
    return result;
  }
  // Fixed, irregular start vector so the run is reproducible and unlikely to
  // be orthogonal to the top singular vector.
  Vector v(m.cols());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
  double vn = L2Norm(v);
  for (double& x : v) x /= vn;

  double prev = -1.0;
  for (int it = 1; it <= max_iters; ++it) {
    Vector mv = MatVec(m, v);
    const double estimate = L2Norm(mv);
    Vector w = MatTVec(m, mv);
    const double wn = L2Norm(w);
    result.iterations = it;
    result.value = std::max(result.value, estimate);
    if (wn == 0.0) {
      // Start vector fell into the null space; nudge it.
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += 1e-3 * static_cast<double>(i + 1);
      vn = L2Norm(v);
      for (double& x : v) x /= vn;
      continue;
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / wn;
    if (prev >= 0.0 && std::abs(estimate - prev) <= tol * std::max(estimate, 1e-300)) {
      result.converged = true;
      return result;
    }
    prev = estimate;
  }
  return result;
}

double MedianOf(std::span<const double> values) {
  COMFETCH_REQUIRE(!values.empty(), "median of empty set");
  std::vector<double> tmp(values.begin(), values.end());
  const std::size_t n = tmp.size();
  const std::size_t mid = n / 2;
  std::nth_element(tmp.begin(), tmp.begin() + mid, tmp.end());
  const double upper = tmp[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(tmp.begin(), tmp.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace comfetch
