#include "ventlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace ventlab::kernels {
namespace {

constexpr int kColBlock = 256;

using idx = std::ptrdiff_t;

double simd_dot(const double* x, const double* y, int n) {
  double s = 0;
#pragma omp simd reduction(+ : s)
  for (int j = 0; j < n; ++j) s += x[j] * y[j];
  return s;
}

double row_lse(const double* x, int n) {
  double mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double s = 0;
  for (int j = 0; j < n; ++j) s += std::exp(x[j] - mx);
  return mx + std::log(s);
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
             int k, int n, bool accumulate) {
  for (idx i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (idx p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i * k + p)];
      const double* brow = b.data() + p * n;
      for (idx j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
                 int k, int n) {
  for (idx i = 0; i < m; ++i)
    for (idx p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i * k + p)];
      const double* brow = b.data() + i * n;
      double* crow = c.data() + p * n;
      for (idx j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
             int n, int k) {
  for (idx i = 0; i < m; ++i)
    for (idx p = 0; p < k; ++p) {
      double s = 0;
      for (idx j = 0; j < n; ++j) s += a[static_cast<std::size_t>(i * n + j)] * b[static_cast<std::size_t>(p * n + j)];
      c[static_cast<std::size_t>(i * k + p)] = s;
    }
}

void row_logsumexp(std::span<const double> x, std::span<double> out, int m, int n) {
  for (idx i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] = row_lse(x.data() + i * n, n);
}

}  // namespace serial

namespace parallel {

// Column blocks keep a slice of b and c in cache; rows are processed four at a
// time so each loaded b element feeds four accumulators. The accumulation
// order over the inner dimension is the same as in the serial loops.

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
             int k, int n, bool accumulate) {
  const int blocks = (n + kColBlock - 1) / kColBlock;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const idx j0 = static_cast<idx>(blk) * kColBlock;
    const idx j1 = std::min<idx>(j0 + kColBlock, n);
    idx i = 0;
    for (; i + 4 <= m; i += 4) {
      double* c0 = c.data() + i * n;
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      if (!accumulate)
        for (double* cr : {c0, c1, c2, c3}) std::fill(cr + j0, cr + j1, 0.0);
      for (idx p = 0; p < k; ++p) {
        const double a0 = a[static_cast<std::size_t>(i * k + p)];
        const double a1 = a[static_cast<std::size_t>((i + 1) * k + p)];
        const double a2 = a[static_cast<std::size_t>((i + 2) * k + p)];
        const double a3 = a[static_cast<std::size_t>((i + 3) * k + p)];
        const double* brow = b.data() + p * n;
#pragma omp simd
        for (idx j = j0; j < j1; ++j) {
          const double bj = brow[j];
          c0[j] += a0 * bj;
          c1[j] += a1 * bj;
          c2[j] += a2 * bj;
          c3[j] += a3 * bj;
        }
      }
    }
    for (; i < m; ++i) {
      double* crow = c.data() + i * n;
      if (!accumulate) std::fill(crow + j0, crow + j1, 0.0);
      for (idx p = 0; p < k; ++p) {
        const double aip = a[static_cast<std::size_t>(i * k + p)];
        const double* brow = b.data() + p * n;
        for (idx j = j0; j < j1; ++j) crow[j] += aip * brow[j];
      }
    }
  }
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
                 int k, int n) {
  const int blocks = (n + kColBlock - 1) / kColBlock;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const idx j0 = static_cast<idx>(blk) * kColBlock;
    const idx j1 = std::min<idx>(j0 + kColBlock, n);
    idx p = 0;
    for (; p + 4 <= k; p += 4) {
      double* c0 = c.data() + p * n;
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      for (idx i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k + p;
        const double a0 = arow[0], a1 = arow[1], a2 = arow[2], a3 = arow[3];
        const double* brow = b.data() + i * n;
#pragma omp simd
        for (idx j = j0; j < j1; ++j) {
          const double bj = brow[j];
          c0[j] += a0 * bj;
          c1[j] += a1 * bj;
          c2[j] += a2 * bj;
          c3[j] += a3 * bj;
        }
      }
    }
    for (; p < k; ++p) {
      double* crow = c.data() + p * n;
      for (idx i = 0; i < m; ++i) {
        const double aip = a[static_cast<std::size_t>(i * k + p)];
        const double* brow = b.data() + i * n;
        for (idx j = j0; j < j1; ++j) crow[j] += aip * brow[j];
      }
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
             int n, int k) {
  // Each output is a sum over chunks of kColBlock products taken chunk by
  // chunk; a thread always owns the same rows, so the result does not depend
  // on the thread count. Chunks are the outer loop so a slice of b is reused
  // by every row while it is cached.
#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (int i = 0; i < m; ++i) std::fill(c.data() + static_cast<idx>(i) * k, c.data() + static_cast<idx>(i + 1) * k, 0.0);
    for (idx j0 = 0; j0 < n; j0 += kColBlock) {
      const int len = static_cast<int>(std::min<idx>(kColBlock, n - j0));
#pragma omp for schedule(static) nowait
      for (int i = 0; i < m; ++i) {
        double* crow = c.data() + static_cast<idx>(i) * k;
        const double* arow = a.data() + static_cast<idx>(i) * n + j0;
        idx p = 0;
        for (; p + 4 <= k; p += 4) {
          const double* b0 = b.data() + p * n + j0;
          const double* b1 = b0 + n;
          const double* b2 = b1 + n;
          const double* b3 = b2 + n;
          double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
          for (int j = 0; j < len; ++j) {
            const double aj = arow[j];
            s0 += aj * b0[j];
            s1 += aj * b1[j];
            s2 += aj * b2[j];
            s3 += aj * b3[j];
          }
          crow[p] += s0;
          crow[p + 1] += s1;
          crow[p + 2] += s2;
          crow[p + 3] += s3;
        }
        for (; p < k; ++p) crow[p] += simd_dot(arow, b.data() + p * n + j0, len);
      }
    }
  }
}

void row_logsumexp(std::span<const double> x, std::span<double> out, int m, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] = row_lse(x.data() + static_cast<idx>(i) * n, n);
}

}  // namespace parallel

int argmax(std::span<const double> row) {
  int best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  return best;
}

}  // namespace ventlab::kernels
