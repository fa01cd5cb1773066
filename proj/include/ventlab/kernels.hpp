#pragma once

#include <span>

/// Dense row-major kernels used by the network. `parallel` variants are
/// blocked and split work over OpenMP threads; each output element is summed
/// in an order fixed by the shapes alone, so results do not depend on the
/// thread count. `serial` variants are plain loops kept as the test reference.
namespace ventlab::kernels {

namespace serial {
/// c (m x n) = a (m x k) * b (k x n), or c += ... when accumulate.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
             int k, int n, bool accumulate);
/// c (k x n) += a^T (a is m x k) * b (m x n).
void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
                 int k, int n);
/// c (m x k) = a (m x n) * b^T (b is k x n).
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
             int n, int k);
/// out[i] = max_j + log sum_j exp(x[i,j] - max_j) for each row of x (m x n).
void row_logsumexp(std::span<const double> x, std::span<double> out, int m, int n);
}  // namespace serial

namespace parallel {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
             int k, int n, bool accumulate);
void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
                 int k, int n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, int m,
             int n, int k);
void row_logsumexp(std::span<const double> x, std::span<double> out, int m, int n);
}  // namespace parallel

/// Index of the first maximum of a row.
int argmax(std::span<const double> row);

}  // namespace ventlab::kernels
