// Copyright 2026 The bvv Authors.
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

#pragma once

// Deterministic PCA: covariance (divisor N - 1), Householder
// tridiagonalization, implicit QL with Wilkinson-style shifts. All
// arithmetic in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "bvv/error.hpp"

namespace bvv {

/// Eigen-decomposition of a dense symmetric matrix.
struct SymmetricEigen {
  std::vector<double> values;   // unsorted, as produced by QL
  std::vector<double> vectors;  // n x n, row i is the eigenvector of values[i]
};

namespace detail {

// Reduces symmetric `a` (n x n row-major, overwritten) to tridiagonal form,
// accumulating the orthogonal transform in `a`. On return `d` holds the
// diagonal and `e` the subdiagonal (e[0] = 0).
inline void householder_tridiagonalize(std::vector<double>& a, std::size_t n,
                                       std::vector<double>& d,
                                       std::vector<double>& e) {
  auto V = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };
  d.assign(n, 0.0);
  e.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) d[j] = V(n - 1, j);

  for (std::size_t i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = V(i - 1, j);
        V(i, j) = 0.0;
        V(j, i) = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        V(j, i) = f;
        g = e[j] + V(j, j) * f;
        for (std::size_t k = j + 1; k <= i - 1; ++k) {
          g += V(k, j) * d[k];
          e[k] += V(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (std::size_t k = j; k <= i - 1; ++k) {
          V(k, j) -= (f * e[k] + g * d[k]);
        }
        d[j] = V(i - 1, j);
        V(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  for (std::size_t i = 0; i + 1 < n; ++i) {
    V(n - 1, i) = V(i, i);
    V(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = V(k, i + 1) / h;
      for (std::size_t j = 0; j <= i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += V(k, i + 1) * V(k, j);
        for (std::size_t k = 0; k <= i; ++k) V(k, j) -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) V(k, i + 1) = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = V(n - 1, j);
    V(n - 1, j) = 0.0;
  }
  V(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e). `w` holds the accumulated
// transform transposed (row i = column i), so each Givens rotation touches
// two contiguous rows.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e,
                           std::vector<double>& w, std::size_t n) {
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n) {
      if (std::abs(e[m]) <= eps * tst1) break;
      ++m;
    }
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > 60) {
          throw Error(ErrorCode::kNonFinite, "QL iteration did not converge");
        }
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0;
        double c2 = c;
        double c3 = c;
        const double el1 = e[l + 1];
        double s = 0.0;
        double s2 = 0.0;
        for (std::size_t ii = m; ii-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[ii];
          h = c * p;
          r = std::hypot(p, e[ii]);
          e[ii + 1] = s * r;
          s = e[ii] / r;
          c = p / r;
          p = c * d[ii] - s * g;
          d[ii + 1] = h + s * (c * g + s * d[ii]);
          double* row_i = &w[ii * n];
          double* row_i1 = &w[(ii + 1) * n];
          for (std::size_t k = 0; k < n; ++k) {
            const double t = row_i1[k];
            row_i1[k] = s * row_i[k] + c * t;
            row_i[k] = c * row_i[k] - s * t;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

}  // namespace detail

/// Full eigen-decomposition of a symmetric n x n matrix (row-major).
inline SymmetricEigen symmetric_eigen(std::vector<double> a, std::size_t n) {
  if (a.size() != n * n) {
    throw Error(ErrorCode::kShapeMismatch, "matrix is not n x n");
  }
  SymmetricEigen out;
  if (n == 0) return out;
  std::vector<double> d;
  std::vector<double> e;
  detail::householder_tridiagonalize(a, n, d, e);
  std::vector<double> w(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) w[c * n + r] = a[r * n + c];
  }
  detail::tridiagonal_ql(d, e, w, n);
  out.values = std::move(d);
  out.vectors = std::move(w);
  return out;
}

struct PcaModel {
  std::size_t dim = 0;  // input dimension D
  std::size_t k = 0;    // output dimension
  std::vector<double> mean;        // D
  std::vector<double> components;  // k x D, orthonormal rows
  std::vector<double> variances;   // k, nonincreasing
  double total_variance = 0.0;     // trace of the covariance

  std::span<const double> component(std::size_t i) const {
    return std::span<const double>(components).subspan(i * dim, dim);
  }

  /// components * (v - mean)
  template <typename T>
  std::vector<double> transform(std::span<const T> v) const {
    if (v.size() != dim) {
      throw Error(ErrorCode::kShapeMismatch,
                  "vector length " + std::to_string(v.size()) +
                      " != PCA input dim " + std::to_string(dim));
    }
    std::vector<double> centered(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      centered[j] = static_cast<double>(v[j]) - mean[j];
    }
    std::vector<double> out(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const double* c = &components[i * dim];
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) acc += c[j] * centered[j];
      out[i] = acc;
    }
    return out;
  }

  /// Ratios variance_i / total variance; all zero when total is zero.
  std::vector<double> explained_variance_ratio() const {
    std::vector<double> out(k, 0.0);
    if (total_variance <= 0.0) return out;
    for (std::size_t i = 0; i < k; ++i) out[i] = variances[i] / total_variance;
    return out;
  }

  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

/// Fits PCA on `rows` x `cols` row-major data. Components are the top-k
/// covariance eigenvectors, sorted by eigenvalue descending (ties keep the
/// solver's index order), each signed so its largest-magnitude entry
/// (first one on ties) is positive.
template <typename T>
PcaModel pca_fit(std::span<const T> data, std::size_t rows, std::size_t cols,
                 std::size_t k) {
  if (data.size() != rows * cols) {
    throw Error(ErrorCode::kShapeMismatch, "data size != rows * cols");
  }
  if (rows < 2) {
    throw Error(ErrorCode::kInvalidArgument, "PCA needs at least 2 samples");
  }
  if (k > cols) {
    throw Error(ErrorCode::kInvalidArgument,
                "k=" + std::to_string(k) + " exceeds input dim " +
                    std::to_string(cols));
  }
  PcaModel model;
  model.dim = cols;
  model.k = k;
  model.mean.assign(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto x = static_cast<double>(data[r * cols + c]);
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::kNonFinite, "non-finite PCA input");
      }
      model.mean[c] += x;
    }
  }
  for (auto& m : model.mean) m /= static_cast<double>(rows);

  std::vector<double> cov(cols * cols, 0.0);
  std::vector<double> x(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      x[c] = static_cast<double>(data[r * cols + c]) - model.mean[c];
    }
    for (std::size_t i = 0; i < cols; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      double* row = &cov[i * cols];
      for (std::size_t j = i; j < cols; ++j) row[j] += xi * x[j];
    }
  }
  const double denom = static_cast<double>(rows - 1);
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = i; j < cols; ++j) {
      cov[i * cols + j] /= denom;
      cov[j * cols + i] = cov[i * cols + j];
    }
  }
  for (std::size_t i = 0; i < cols; ++i) {
    model.total_variance += cov[i * cols + i];
  }

  const auto eig = symmetric_eigen(std::move(cov), cols);
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return eig.values[a] > eig.values[b];
  });

  model.components.assign(k * cols, 0.0);
  model.variances.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t src = order[i];
    model.variances[i] = std::max(0.0, eig.values[src]);
    const double* v = &eig.vectors[src * cols];
    std::size_t arg = 0;
    for (std::size_t j = 1; j < cols; ++j) {
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    }
    const double sign = v[arg] < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < cols; ++j) {
      model.components[i * cols + j] = sign * v[j];
    }
  }
  return model;
}

}  // namespace bvv
