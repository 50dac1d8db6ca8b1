#pragma once

// Thin row-major wrappers over cblas. All heavy dense math in the library
// funnels through these two entry points.

#include <cstdint>

#if __has_include(<cblas-openblas.h>)
#include <cblas-openblas.h>
extern "C" void openblas_set_num_threads(int);
#define TMLKIT_HAVE_OPENBLAS 1
#else
#include <cblas.h>
#endif

namespace tml {

inline void blas_single_thread() {
#ifdef TMLKIT_HAVE_OPENBLAS
  // Reduction order must stay fixed for reproducible training runs.
  static const bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
#endif
}

// c[m,n] = alpha * op(a) * op(b) + beta * c, row-major.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  blas_single_thread();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  blas_single_thread();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

// c[n,n] = a * a^T for row-major a[n,k]; fills the full symmetric matrix.
inline void gram(int n, int k, const double* a, double* c) {
  blas_single_thread();
  cblas_dsyrk(CblasRowMajor, CblasUpper, CblasNoTrans, n, k, 1.0, a, k, 0.0, c,
              n);
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < i; ++j) c[i * n + j] = c[j * n + i];
}

}  // namespace tml
