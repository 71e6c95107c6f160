#pragma once

namespace celldet {

// Row-major single-precision GEMM kernels. Each output element is produced
// by exactly one thread with a fixed accumulation order, so results are
// bitwise identical for any thread count.

// c[m,n] = a[m,k] * b[k,n]   (+= c when accumulate)
void sgemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, bool accumulate, bool parallel = true);

// c[m,n] = a[m,k] * b[n,k]^T
void sgemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, bool accumulate, bool parallel = true);

// c[m,n] = a[r,m]^T * b[r,n], summing over r rows.
void sgemm_tn(int m, int n, int r, const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, bool accumulate, bool parallel = true);

}  // namespace celldet
