#pragma once

#include <cstdint>

namespace cdfsl::detail {

// Row-major accumulate kernels. Each output element is produced by exactly
// one thread with a fixed summation order, so results are bit-identical for
// any thread count.

/// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n);

/// C[m,k] += A[m,n] * B[k,n]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t n, std::int64_t k);

/// C[k,n] += A[m,k]^T * B[m,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n);

}  // namespace cdfsl::detail
