#include "mmbeam/kernels/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmbeam::kernels {

namespace {

constexpr long kParallelWork = 1L << 15;

// Columns per register tile: two 64-byte vectors.
template <typename T>
inline constexpr int kTileCols = 128 / static_cast<int>(sizeof(T));

// C[i..i+4, j0..j0+JB] held in registers across k. Each element still sums
// its k terms in increasing order, so results match the streaming loop.
template <typename T>
void tile_4xJ(int i, int j0, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  constexpr int JB = kTileCols<T>;
  T acc[4][JB];
  for (int r = 0; r < 4; ++r) {
    const T* c = C + static_cast<long>(i + r) * N + j0;
    for (int j = 0; j < JB; ++j) acc[r][j] = accumulate ? c[j] : T(0);
  }
  const T* a0 = A + static_cast<long>(i) * K;
  for (int k = 0; k < K; ++k) {
    const T* b = B + static_cast<long>(k) * N + j0;
    const T v0 = a0[k], v1 = a0[K + k], v2 = a0[2L * K + k], v3 = a0[3L * K + k];
    for (int j = 0; j < JB; ++j) {
      const T bj = b[j];
      acc[0][j] += v0 * bj;
      acc[1][j] += v1 * bj;
      acc[2][j] += v2 * bj;
      acc[3][j] += v3 * bj;
    }
  }
  for (int r = 0; r < 4; ++r) {
    T* c = C + static_cast<long>(i + r) * N + j0;
    for (int j = 0; j < JB; ++j) c[j] = acc[r][j];
  }
}

// Four output rows at a time so each loaded row of B feeds four FMAs.
template <typename T>
void nn_rows(int i0, int i1, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  constexpr int JB = kTileCols<T>;
  const int tiled = N / JB * JB;
  int i = i0;
  for (; i + 4 <= i1; i += 4) {
    for (int j0 = 0; j0 < tiled; j0 += JB) tile_4xJ(i, j0, N, K, A, B, C, accumulate);
    if (tiled == N) continue;
    T* c0 = C + static_cast<long>(i) * N;
    T* c1 = c0 + N;
    T* c2 = c1 + N;
    T* c3 = c2 + N;
    if (!accumulate) {
      for (T* c : {c0, c1, c2, c3}) std::fill(c + tiled, c + N, T(0));
    }
    const T* a0 = A + static_cast<long>(i) * K;
    const T* a1 = a0 + K;
    const T* a2 = a1 + K;
    const T* a3 = a2 + K;
    for (int k = 0; k < K; ++k) {
      const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
      const T* b = B + static_cast<long>(k) * N;
      for (int j = tiled; j < N; ++j) {
        const T bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < i1; ++i) {
    T* c = C + static_cast<long>(i) * N;
    if (!accumulate) std::fill(c, c + N, T(0));
    const T* a = A + static_cast<long>(i) * K;
    for (int k = 0; k < K; ++k) {
      const T v = a[k];
      const T* b = B + static_cast<long>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += v * b[j];
    }
  }
}

}  // namespace

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  if (M <= 0 || N <= 0) return;
  if (K <= 0) {
    if (!accumulate) std::fill(C, C + static_cast<long>(M) * N, T(0));
    return;
  }
  const long work = static_cast<long>(M) * N * K;
#ifdef _OPENMP
  if (work >= kParallelWork && M >= 8 && omp_get_max_threads() > 1 && !omp_in_parallel()) {
    const int blocks = (M + 3) / 4;
#pragma omp parallel for schedule(static)
    for (int blk = 0; blk < blocks; ++blk) {
      const int i0 = blk * 4;
      nn_rows(i0, std::min(M, i0 + 4), N, K, A, B, C, accumulate);
    }
    return;
  }
#endif
  (void)work;
  nn_rows(0, M, N, K, A, B, C, accumulate);
}

template <typename T>
void transpose(int rows, int cols, const T* in, T* out) {
  constexpr int kTile = 32;
  for (int r0 = 0; r0 < rows; r0 += kTile) {
    const int r1 = std::min(rows, r0 + kTile);
    for (int c0 = 0; c0 < cols; c0 += kTile) {
      const int c1 = std::min(cols, c0 + kTile);
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) out[static_cast<long>(c) * rows + r] = in[static_cast<long>(r) * cols + c];
    }
  }
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  std::vector<T> bt(static_cast<size_t>(N) * K);
  transpose(N, K, B, bt.data());
  gemm_nn(M, N, K, A, bt.data(), C, accumulate);
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  std::vector<T> at(static_cast<size_t>(M) * K);
  transpose(K, M, A, at.data());
  gemm_nn(M, N, K, at.data(), B, C, accumulate);
}

namespace reference {

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      T acc = accumulate ? C[static_cast<long>(i) * N + j] : T(0);
      for (int k = 0; k < K; ++k) acc += A[static_cast<long>(i) * K + k] * B[static_cast<long>(k) * N + j];
      C[static_cast<long>(i) * N + j] = acc;
    }
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      T acc = accumulate ? C[static_cast<long>(i) * N + j] : T(0);
      for (int k = 0; k < K; ++k) acc += A[static_cast<long>(i) * K + k] * B[static_cast<long>(j) * K + k];
      C[static_cast<long>(i) * N + j] = acc;
    }
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      T acc = accumulate ? C[static_cast<long>(i) * N + j] : T(0);
      for (int k = 0; k < K; ++k) acc += A[static_cast<long>(k) * M + i] * B[static_cast<long>(k) * N + j];
      C[static_cast<long>(i) * N + j] = acc;
    }
}

}  // namespace reference

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

#define MMBEAM_INSTANTIATE_GEMM(T)                                                   \
  template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);             \
  template void gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);             \
  template void gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);             \
  template void transpose<T>(int, int, const T*, T*);                                \
  template void reference::gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);  \
  template void reference::gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);  \
  template void reference::gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);

MMBEAM_INSTANTIATE_GEMM(float)
MMBEAM_INSTANTIATE_GEMM(double)

}  // namespace mmbeam::kernels
