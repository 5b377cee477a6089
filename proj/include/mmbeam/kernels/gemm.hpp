#pragma once

// Dense row-major matrix products. The OpenMP kernels partition the output
// by rows and keep the per-element summation order fixed (ascending k), so
// their results do not depend on the thread count. The `reference`
// namespace holds the plain triple loops used by tests and the benchmark.

namespace mmbeam::kernels {

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// out[cols, rows] = in[rows, cols]^T
template <typename T>
void transpose(int rows, int cols, const T* in, T* out);

namespace reference {

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

}  // namespace reference

// Threads used by the parallel kernels (1 when built without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace mmbeam::kernels
