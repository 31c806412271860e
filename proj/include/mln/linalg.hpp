/* Copyright 2026 The MLN Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#ifndef MLN_LINALG_HPP_
#define MLN_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "mln/matrix.hpp"

namespace mln {

// Relative rank tolerance: singular values (or pivoted column norms) at or
// below tol * largest are treated as zero.
inline constexpr double kDefaultRankTol = 1e-8;

// Thin SVD a = u * diag(s) * v^T with s sorted descending.
// u is m x k, v is n x k, k = min(m, n).
struct Svd {
  Matrix u;
  Vector s;
  Matrix v;
};

namespace detail {

// One-sided Jacobi on the columns of a (rows() >= cols()). Columns are kept
// as rows of a transposed work matrix so the inner loops are contiguous.
inline Svd jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix w = transpose(a);          // n x m, row j = column j of a
  Matrix vt = Matrix::identity(n);  // row j = column j of v
  const double eps = std::numeric_limits<double>::epsilon();

  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* wp = w.row(p).data();
        double* wq = w.row(q).data();
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += wp[i] * wp[i];
          beta += wq[i] * wq[i];
          gamma += wp[i] * wq[i];
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = wp[i];
          const double y = wq[i];
          wp[i] = c * x - s * y;
          wq[i] = s * x + c * y;
        }
        double* vp = vt.row(p).data();
        double* vq = vt.row(q).data();
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) sv[j] = norm2(w.row(j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

  Svd out{Matrix(m, n), Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = sv[j];
    for (std::size_t i = 0; i < m; ++i)
      out.u(i, k) = sv[j] > 0.0 ? w(j, i) / sv[j] : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = vt(j, i);
  }
  return out;
}

}  // namespace detail

inline Svd svd(const Matrix& a) {
  if (a.rows() >= a.cols()) return detail::jacobi_svd_tall(a);
  Svd t = detail::jacobi_svd_tall(transpose(a));
  return Svd{std::move(t.v), std::move(t.s), std::move(t.u)};
}

inline std::size_t matrix_rank(const Matrix& a, double tol = kDefaultRankTol) {
  if (a.empty()) return 0;
  const Vector s = svd(a).s;
  if (s.empty() || s.front() == 0.0) return 0;
  const double cutoff = tol * s.front();
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [&](double x) { return x > cutoff; }));
}

// Moore-Penrose pseudo-inverse; singular values at or below tol * s_max are
// dropped, so a zero matrix maps to the zero matrix of transposed shape.
inline Matrix pseudo_inverse(const Matrix& a, double tol = kDefaultRankTol) {
  Matrix out(a.cols(), a.rows());
  if (a.empty()) return out;
  const Svd d = svd(a);
  if (d.s.empty() || d.s.front() == 0.0) return out;
  const double cutoff = tol * d.s.front();
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    if (d.s[k] <= cutoff) break;
    const double inv = 1.0 / d.s[k];
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double vik = d.v(i, k) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < a.rows(); ++j) out(i, j) += vik * d.u(j, k);
    }
  }
  check_finite(out, "pseudo_inverse");
  return out;
}

// Orthonormal basis of {x : v^T x = 0} for v of shape D x m, as the trailing
// D - rank columns of Q from a Householder QR of v with column pivoting.
// Rank is the number of pivots whose residual column norm exceeds
// tol * (largest column norm).
inline Matrix nullspace_basis(const Matrix& v, double tol = kDefaultRankTol) {
  const std::size_t d = v.rows();
  const std::size_t m = v.cols();
  Matrix a = v;
  std::vector<Vector> reflectors;
  double ref_norm = 0.0;

  for (std::size_t j = 0; j < std::min(d, m); ++j) {
    std::size_t pivot = j;
    double best = -1.0;
    for (std::size_t c = j; c < m; ++c) {
      double s = 0.0;
      for (std::size_t r = j; r < d; ++r) s += a(r, c) * a(r, c);
      if (s > best) {
        best = s;
        pivot = c;
      }
    }
    best = std::sqrt(best);
    if (j == 0) ref_norm = best;
    if (ref_norm == 0.0 || best <= tol * ref_norm) break;
    if (pivot != j)
      for (std::size_t r = 0; r < d; ++r) std::swap(a(r, j), a(r, pivot));

    Vector u(d - j);
    for (std::size_t r = j; r < d; ++r) u[r - j] = a(r, j);
    const double alpha = -std::copysign(best, u[0]);
    u[0] -= alpha;
    const double un = norm2(u);
    for (double& x : u) x /= un;
    for (std::size_t c = j; c < m; ++c) {
      double s = 0.0;
      for (std::size_t r = j; r < d; ++r) s += u[r - j] * a(r, c);
      for (std::size_t r = j; r < d; ++r) a(r, c) -= 2.0 * s * u[r - j];
    }
    reflectors.push_back(std::move(u));
  }

  const std::size_t rank = reflectors.size();
  // Q = H_0 H_1 ... H_{r-1}; apply to the identity right to left.
  Matrix q = Matrix::identity(d);
  for (std::size_t jj = rank; jj-- > 0;) {
    const Vector& u = reflectors[jj];
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t r = jj; r < d; ++r) s += u[r - jj] * q(r, c);
      if (s == 0.0) continue;
      for (std::size_t r = jj; r < d; ++r) q(r, c) -= 2.0 * s * u[r - jj];
    }
  }
  Matrix basis(d, d - rank);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = rank; c < d; ++c) basis(r, c - rank) = q(r, c);
  return basis;
}

// Orthogonal projector onto the complement of range(v): I - v v^+.
inline Matrix complement_projector(const Matrix& v,
                                   double tol = kDefaultRankTol) {
  Matrix p = Matrix::identity(v.rows());
  if (v.cols() == 0) return p;
  const Matrix q = matmul(v, pseudo_inverse(v, tol));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= q[i];
  return p;
}

}  // namespace mln

#endif  // MLN_LINALG_HPP_
