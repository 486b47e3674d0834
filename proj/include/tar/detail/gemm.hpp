#pragma once

#include <cstdint>

// Single-threaded GEMM kernels for the convolution lowering. Loop orders
// are chosen so the compiler can vectorize the inner loop without
// reassociation: nn and tn stream rows of B and C, nt keeps four
// independent accumulators that are reduced in a fixed order, so results
// are bit-reproducible run to run.

namespace tar::detail {

// C[m,n] += sum_k A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      T av = arow[p];
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += sum_k A[k,m] * B[k,n]
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      T av = a[p * m + i];
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += sum_k A[m,k] * B[n,k]
template <typename T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k,
             const T* a, const T* b, T* c) {
  constexpr std::int64_t kLanes = 8;
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc[kLanes] = {};
      std::int64_t p = 0;
      for (; p + kLanes <= k; p += kLanes) {
        for (std::int64_t l = 0; l < kLanes; ++l) acc[l] += arow[p + l] * brow[p + l];
      }
      T tail = T{0};
      for (; p < k; ++p) tail += arow[p] * brow[p];
      T sum = T{0};
      for (std::int64_t l = 0; l < kLanes; ++l) sum += acc[l];
      crow[j] += sum + tail;
    }
  }
}

}  // namespace tar::detail
