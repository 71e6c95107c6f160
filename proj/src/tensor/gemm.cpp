#include "celldet/tensor/gemm.hpp"

#include <cstring>

namespace celldet {

void sgemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, bool accumulate, bool parallel) {
#pragma omp parallel for schedule(static) if (parallel && m > 1)
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<long>(i) * ldc;
    if (!accumulate) std::memset(crow, 0, sizeof(float) * static_cast<std::size_t>(n));
    const float* arow = a + static_cast<long>(i) * lda;
    for (int kk = 0; kk < k; ++kk) {
      const float aik = arow[kk];
      if (aik == 0.0f) continue;
      const float* brow = b + static_cast<long>(kk) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

void sgemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, bool accumulate, bool parallel) {
#pragma omp parallel for schedule(static) if (parallel && m > 1)
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<long>(i) * lda;
    float* crow = c + static_cast<long>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<long>(j) * ldb;
      float acc = accumulate ? crow[j] : 0.0f;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
}

void sgemm_tn(int m, int n, int r, const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, bool accumulate, bool parallel) {
#pragma omp parallel for schedule(static) if (parallel && m > 1)
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<long>(i) * ldc;
    if (!accumulate) std::memset(crow, 0, sizeof(float) * static_cast<std::size_t>(n));
    for (int rr = 0; rr < r; ++rr) {
      const float ari = a[static_cast<long>(rr) * lda + i];
      if (ari == 0.0f) continue;
      const float* brow = b + static_cast<long>(rr) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += ari * brow[j];
    }
  }
}

}  // namespace celldet
