// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "sonarseg/tensor.hpp"

namespace sonarseg::kernels {

// out (cols x rows) = in (rows x cols)^T
template <typename T>
void transpose(const T* in, Index rows, Index cols, T* out) {
  constexpr Index kBlock = 32;
  for (Index r0 = 0; r0 < rows; r0 += kBlock) {
    const Index r1 = std::min(rows, r0 + kBlock);
    for (Index c0 = 0; c0 < cols; c0 += kBlock) {
      const Index c1 = std::min(cols, c0 + kBlock);
      for (Index r = r0; r < r1; ++r) {
        for (Index c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
}

template <typename T>
T dot(const T* a, const T* b, Index n) {
  T s{0};
#pragma omp simd reduction(+ : s)
  for (Index i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, Index n) {
#pragma omp simd
  for (Index i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// C (M x N) = op(A) op(B) + (accumulate ? C : 0), row-major.
// op(A) is M x K (stored K x M when trans_a); op(B) is K x N (stored N x K
// when trans_b).
template <typename T>
void gemm(bool trans_a, bool trans_b, Index M, Index N, Index K, const T* A, const T* B, T* C,
          bool accumulate) {
  if (!accumulate) std::fill(C, C + M * N, T{0});
  if (M == 0 || N == 0 || K == 0) return;

  std::vector<T> a_buf;
  if (trans_a) {
    a_buf.resize(static_cast<std::size_t>(M * K));
    transpose(A, K, M, a_buf.data());
    A = a_buf.data();
  }
  if (trans_b && K >= 64) {
    // Long reductions: contiguous dot products.
    for (Index i = 0; i < M; ++i) {
      for (Index j = 0; j < N; ++j) C[i * N + j] += dot(A + i * K, B + j * K, K);
    }
    return;
  }
  std::vector<T> b_buf;
  if (trans_b) {
    b_buf.resize(static_cast<std::size_t>(K * N));
    transpose(B, N, K, b_buf.data());
    B = b_buf.data();
  }
  for (Index i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (Index k = 0; k < K; ++k) axpy(a[k], B + k * N, c, N);
  }
}

}  // namespace sonarseg::kernels
