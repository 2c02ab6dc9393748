#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/tensor.hpp"

namespace dilhyfs {

namespace kernel {

using v4d = double __attribute__((vector_size(32)));

// Unaligned 4-lane load and store; macros rather than functions so no vector value crosses a
// call boundary when AVX is not enabled.
#define DILHYFS_LOAD4(dst, src) std::memcpy(&(dst), (src), sizeof(v4d))
#define DILHYFS_STORE4(dst, src) std::memcpy((dst), &(src), sizeof(v4d))

// C[m x n] += A[m x k] * B[k x n], all row-major, no aliasing. Every C entry accumulates its
// k terms in ascending order. Full 4 x 8 tiles of C are held in registers across the whole
// inner dimension; leftover rows and columns take the same order one entry at a time.
inline void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
                     std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t n8 = n - n % 8;
  const std::size_t m4 = m - m % 4;
  for (std::size_t j = 0; j < n8; j += 8) {
    std::size_t i = 0;
    for (; i < m4; i += 4) {
      v4d acc[4][2];
      for (std::size_t r = 0; r < 4; ++r) {
        DILHYFS_LOAD4(acc[r][0], c + (i + r) * n + j);
        DILHYFS_LOAD4(acc[r][1], c + (i + r) * n + j + 4);
      }
      const double* a0 = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        v4d b0, b1;
        DILHYFS_LOAD4(b0, b + p * n + j);
        DILHYFS_LOAD4(b1, b + p * n + j + 4);
        for (std::size_t r = 0; r < 4; ++r) {
          const double s = a0[r * k + p];
          acc[r][0] += s * b0;
          acc[r][1] += s * b1;
        }
      }
      for (std::size_t r = 0; r < 4; ++r) {
        DILHYFS_STORE4(c + (i + r) * n + j, acc[r][0]);
        DILHYFS_STORE4(c + (i + r) * n + j + 4, acc[r][1]);
      }
    }
    for (; i < m; ++i) {
      v4d acc0, acc1;
      DILHYFS_LOAD4(acc0, c + i * n + j);
      DILHYFS_LOAD4(acc1, c + i * n + j + 4);
      const double* ai = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        v4d b0, b1;
        DILHYFS_LOAD4(b0, b + p * n + j);
        DILHYFS_LOAD4(b1, b + p * n + j + 4);
        acc0 += ai[p] * b0;
        acc1 += ai[p] * b1;
      }
      DILHYFS_STORE4(c + i * n + j, acc0);
      DILHYFS_STORE4(c + i * n + j + 4, acc1);
    }
  }
  if (n8 == n) return;
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = n8; j < n; ++j) {
      double s = c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

#undef DILHYFS_LOAD4
#undef DILHYFS_STORE4

// C[m x n] += A^T * B with A stored [k x m].
inline void gemm_tn_acc(const double* __restrict a, const double* __restrict b,
                        double* __restrict c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* __restrict brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = arow[i];
      double* __restrict ci = c + i * n;
#pragma GCC ivdep
      for (std::size_t j = 0; j < n; ++j) ci[j] += s * brow[j];
    }
  }
}

// G[n x n] += H^T H for H stored [rows x n]. Only the upper triangle is accumulated (in
// ascending row order) and then mirrored, so G stays exactly symmetric.
inline void syrk_acc(const double* h, double* g, std::size_t rows, std::size_t n) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < n; i0 += kBlock) {
    const std::size_t i1 = std::min(n, i0 + kBlock);
    for (std::size_t p = 0; p < rows; ++p) {
      const double* hp = h + p * n;
      for (std::size_t i = i0; i < i1; ++i) {
        const double s = hp[i];
        if (s == 0.0) continue;
        double* gi = g + i * n;
        for (std::size_t j = i; j < n; ++j) gi[j] += s * hp[j];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) g[j * n + i] = g[i * n + j];
  }
}

// Fixed-order dot product with sixteen interleaved partial sums.
inline double dot(const double* x, const double* y, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t t = 0; t < kLanes; ++t) acc[t] += x[i + t] * y[i + t];
  }
  for (std::size_t t = 0; t < kLanes / 2; ++t) acc[t] += acc[t + kLanes / 2];
  for (std::size_t t = 0; t < kLanes / 4; ++t) acc[t] += acc[t + kLanes / 4];
  double s = (acc[0] + acc[2]) + (acc[1] + acc[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

inline void transpose(const double* src, double* dst, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t i1 = std::min(rows, i0 + kBlock);
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
      }
    }
  }
}

}  // namespace kernel

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

/// Standard matrix product; entries accumulate over the inner index in ascending order.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ for " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  kernel::gemm_acc(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

/// a^T * b without materialising the transpose.
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("matmul_tn: row counts differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tensor c({a.dim(1), b.dim(1)});
  kernel::gemm_tn_acc(a.data(), b.data(), c.data(), a.dim(1), a.dim(0), b.dim(1));
  return c;
}

inline Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor t({a.dim(1), a.dim(0)});
  kernel::transpose(a.data(), t.data(), a.dim(0), a.dim(1));
  return t;
}

/// Lower Cholesky factor L (row-major, upper part zero) with A = L L^T.
///
/// Rows are produced in panels so each finished row of L is streamed once per panel; the
/// arithmetic for every entry is identical to the unblocked row-oriented algorithm.
inline Tensor cholesky(const Tensor& a) {
  require_matrix(a, "cholesky");
  const std::size_t n = a.dim(0);
  if (a.dim(1) != n) throw DimensionError("cholesky: matrix not square " + shape_string(a.shape()));
  Tensor l({n, n});
  double* lp = l.data();
  const double* ap = a.data();
  constexpr std::size_t kPanel = 48;

  auto finish_entry = [&](std::size_t i, std::size_t j) {
    const double s = ap[i * n + j] - kernel::dot(lp + i * n, lp + j * n, j);
    if (i == j) {
      if (!(s > 0.0) || !std::isfinite(s)) throw FactorizationError(i, s);
      lp[i * n + i] = std::sqrt(s);
    } else {
      lp[i * n + j] = s / lp[j * n + j];
    }
  };

  for (std::size_t p0 = 0; p0 < n; p0 += kPanel) {
    const std::size_t p1 = std::min(n, p0 + kPanel);
    for (std::size_t j = 0; j < p0; ++j) {
      for (std::size_t i = p0; i < p1; ++i) finish_entry(i, j);
    }
    for (std::size_t i = p0; i < p1; ++i) {
      for (std::size_t j = p0; j <= i; ++j) finish_entry(i, j);
    }
  }
  return l;
}

/// Solves L L^T X = B given the lower factor.
inline Tensor cholesky_solve(const Tensor& l, const Tensor& b) {
  const std::size_t n = l.dim(0);
  const std::size_t c = b.dim(1);
  Tensor x = b;
  double* xp = x.data();
  const double* lp = l.data();
  // Forward: L Y = B.
  for (std::size_t i = 0; i < n; ++i) {
    double* xi = xp + i * c;
    for (std::size_t k = 0; k < i; ++k) {
      const double s = lp[i * n + k];
      const double* xk = xp + k * c;
      for (std::size_t j = 0; j < c; ++j) xi[j] -= s * xk[j];
    }
    const double inv = 1.0 / lp[i * n + i];
    for (std::size_t j = 0; j < c; ++j) xi[j] *= inv;
  }
  // Backward: L^T X = Y.
  for (std::size_t ii = n; ii-- > 0;) {
    double* xi = xp + ii * c;
    const double inv = 1.0 / lp[ii * n + ii];
    for (std::size_t j = 0; j < c; ++j) xi[j] *= inv;
    for (std::size_t k = 0; k < ii; ++k) {
      const double s = lp[ii * n + k];
      double* xk = xp + k * c;
      for (std::size_t j = 0; j < c; ++j) xk[j] -= s * xi[j];
    }
  }
  return x;
}

/// Solves A X = B for symmetric positive definite A via Cholesky.
inline Tensor solve_spd(const Tensor& a, const Tensor& b) {
  require_matrix(a, "solve_spd");
  require_matrix(b, "solve_spd");
  const std::size_t n = a.dim(0);
  if (a.dim(1) != n || b.dim(0) != n) {
    throw DimensionError("solve_spd: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const double tol = 1e-9 * std::max(1.0, max_abs(a.values()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(a.at(i, j) - a.at(j, i)) > tol) {
        throw NumericError("solve_spd: matrix not symmetric at (" + std::to_string(i) + ", " +
                           std::to_string(j) + ")");
      }
    }
  }
  return cholesky_solve(cholesky(a), b);
}

}  // namespace dilhyfs
