#pragma once

#include <cstddef>

namespace depl::nn::detail {

// C[M x N] += A[M x K] * B[K x N], all row-major.
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c);

// C[M x N] += A^T * B where A is stored K x M.
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c);

// out[cols x rows] = in[rows x cols]^T
void transpose(std::size_t rows, std::size_t cols, const double* in, double* out);

}  // namespace depl::nn::detail
