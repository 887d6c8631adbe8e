// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "gemm.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
#include <immintrin.h>
#endif

namespace residscope::detail {
namespace {

inline double madd(double a, double b, double acc) {
#if defined(__FMA__)
  return std::fma(a, b, acc);
#else
  return acc + a * b;
#endif
}

void scalar_cell(const double* a, std::size_t k, const double* b, std::size_t ldb, double* c) {
  double acc = 0.0;
  for (std::size_t p = 0; p < k; ++p) acc = madd(a[p], b[p * ldb], acc);
  *c = acc;
}

#if defined(__AVX512F__)

constexpr std::size_t kLanes = 8;

template <int MR, int NV>
inline void micro(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, std::size_t k) {
  __m512d acc[MR][NV];
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) acc[r][v] = _mm512_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    __m512d bv[NV];
#pragma GCC unroll 8
    for (int v = 0; v < NV; ++v) bv[v] = _mm512_loadu_pd(b + p * ldb + kLanes * v);
#pragma GCC unroll 8
    for (int r = 0; r < MR; ++r) {
      const __m512d av = _mm512_set1_pd(a[r * lda + p]);
#pragma GCC unroll 8
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm512_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) _mm512_storeu_pd(c + r * ldc + kLanes * v, acc[r][v]);
}

constexpr int kRowTile = 6;
constexpr int kVecTile = 4;

#elif defined(__AVX2__) && defined(__FMA__)

constexpr std::size_t kLanes = 4;

template <int MR, int NV>
inline void micro(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, std::size_t k) {
  __m256d acc[MR][NV];
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    __m256d bv[NV];
#pragma GCC unroll 8
#pragma GCC unroll 8
    for (int v = 0; v < NV; ++v) bv[v] = _mm256_loadu_pd(b + p * ldb + kLanes * v);
#pragma GCC unroll 8
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_set1_pd(a[r * lda + p]);
#pragma GCC unroll 8
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) _mm256_storeu_pd(c + r * ldc + kLanes * v, acc[r][v]);
}

constexpr int kRowTile = 4;
constexpr int kVecTile = 3;

#endif

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  std::size_t j = 0;
#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
  constexpr std::size_t kColTile = kLanes * kVecTile;
  // Column panels of b are copied contiguous so the kernel streams them.
  std::vector<double> panel(n >= kColTile ? k * kColTile : 0);
  for (; j + kColTile <= n; j += kColTile) {
    for (std::size_t p = 0; p < k; ++p)
      std::copy_n(b + p * n + j, kColTile, panel.data() + p * kColTile);
    std::size_t i = 0;
    for (; i + kRowTile <= m; i += kRowTile)
      micro<kRowTile, kVecTile>(a + i * k, k, panel.data(), kColTile, c + i * n + j, n, k);
    for (; i < m; ++i) micro<1, kVecTile>(a + i * k, k, panel.data(), kColTile, c + i * n + j, n, k);
  }
  for (; j + kLanes <= n; j += kLanes) {
    std::size_t i = 0;
    for (; i + kRowTile <= m; i += kRowTile)
      micro<kRowTile, 1>(a + i * k, k, b + j, n, c + i * n + j, n, k);
    for (; i < m; ++i) micro<1, 1>(a + i * k, k, b + j, n, c + i * n + j, n, k);
  }
#endif
  for (; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) scalar_cell(a + i * k, k, b + j, n, c + i * n + j);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  std::vector<double> at(m * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
  gemm(at.data(), b, c, m, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm(a, bt.data(), c, m, k, n);
}

}  // namespace residscope::detail
