// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "explore/simd/kernels.hpp"

#include <immintrin.h>

namespace explore::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four rows per pass so each load of x feeds four FMAs.
void gemv_avx2(const double* w, std::size_t rows, std::size_t cols, const double* x,
               const double* bias, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* w0 = w + r * cols;
    const double* w1 = w0 + cols;
    const double* w2 = w1 + cols;
    const double* w3 = w2 + cols;
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d xv = _mm256_loadu_pd(x + c);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + c), xv, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + c), xv, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + c), xv, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + c), xv, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; c < cols; ++c) {
      s0 += w0[c] * x[c];
      s1 += w1[c] * x[c];
      s2 += w2[c] * x[c];
      s3 += w3[c] * x[c];
    }
    if (bias) {
      s0 += bias[r];
      s1 += bias[r + 1];
      s2 += bias[r + 2];
      s3 += bias[r + 3];
    }
    y[r] = s0;
    y[r + 1] = s1;
    y[r + 2] = s2;
    y[r + 3] = s3;
  }
  for (; r < rows; ++r) {
    double acc = dot_avx2(w + r * cols, x, cols);
    y[r] = bias ? acc + bias[r] : acc;
  }
}

void gemv_t_acc_avx2(const double* w, std::size_t rows, std::size_t cols, const double* dy,
                     double* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] == 0.0) continue;
    axpy_avx2(dy[r], w + r * cols, dx, cols);
  }
}

void ger_acc_avx2(double* g, std::size_t rows, std::size_t cols, const double* dy,
                  const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] == 0.0) continue;
    axpy_avx2(dy[r], x, g + r * cols, cols);
  }
}

// Two input rows against four weight rows: eight accumulators, six loads.
void gemm_nt_avx2(const double* w, std::size_t rows, std::size_t cols, const double* x,
                  std::size_t n, const double* bias, double* y) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const double* x0 = x + i * cols;
    const double* x1 = x0 + cols;
    double* y0 = y + i * rows;
    double* y1 = y0 + rows;
    std::size_t r = 0;
    for (; r + 4 <= rows; r += 4) {
      const double* w0 = w + r * cols;
      const double* w1 = w0 + cols;
      const double* w2 = w1 + cols;
      const double* w3 = w2 + cols;
      __m256d a00 = _mm256_setzero_pd(), a01 = _mm256_setzero_pd();
      __m256d a02 = _mm256_setzero_pd(), a03 = _mm256_setzero_pd();
      __m256d a10 = _mm256_setzero_pd(), a11 = _mm256_setzero_pd();
      __m256d a12 = _mm256_setzero_pd(), a13 = _mm256_setzero_pd();
      std::size_t c = 0;
      for (; c + 4 <= cols; c += 4) {
        const __m256d xa = _mm256_loadu_pd(x0 + c);
        const __m256d xb = _mm256_loadu_pd(x1 + c);
        __m256d wv = _mm256_loadu_pd(w0 + c);
        a00 = _mm256_fmadd_pd(wv, xa, a00);
        a10 = _mm256_fmadd_pd(wv, xb, a10);
        wv = _mm256_loadu_pd(w1 + c);
        a01 = _mm256_fmadd_pd(wv, xa, a01);
        a11 = _mm256_fmadd_pd(wv, xb, a11);
        wv = _mm256_loadu_pd(w2 + c);
        a02 = _mm256_fmadd_pd(wv, xa, a02);
        a12 = _mm256_fmadd_pd(wv, xb, a12);
        wv = _mm256_loadu_pd(w3 + c);
        a03 = _mm256_fmadd_pd(wv, xa, a03);
        a13 = _mm256_fmadd_pd(wv, xb, a13);
      }
      double s[8] = {hsum(a00), hsum(a01), hsum(a02), hsum(a03),
                     hsum(a10), hsum(a11), hsum(a12), hsum(a13)};
      for (; c < cols; ++c) {
        s[0] += w0[c] * x0[c];
        s[1] += w1[c] * x0[c];
        s[2] += w2[c] * x0[c];
        s[3] += w3[c] * x0[c];
        s[4] += w0[c] * x1[c];
        s[5] += w1[c] * x1[c];
        s[6] += w2[c] * x1[c];
        s[7] += w3[c] * x1[c];
      }
      for (std::size_t k = 0; k < 4; ++k) {
        const double b = bias ? bias[r + k] : 0.0;
        y0[r + k] = s[k] + b;
        y1[r + k] = s[4 + k] + b;
      }
    }
    for (; r < rows; ++r) {
      const double b = bias ? bias[r] : 0.0;
      y0[r] = dot_avx2(w + r * cols, x0, cols) + b;
      y1[r] = dot_avx2(w + r * cols, x1, cols) + b;
    }
  }
  for (; i < n; ++i) gemv_avx2(w, rows, cols, x + i * cols, bias, y + i * rows);
}

// out[p, :] += sum_q A(p, q) B[q, :], with A(p, q) = a[p * sap + q * saq].
// PB output rows share each load of B; eight columns live in registers.
template <std::size_t PB>
void rank_update_block(double* out, std::size_t ldo, const double* a, std::size_t sap,
                       std::size_t saq, const double* b, std::size_t q_count,
                       std::size_t cols) {
  std::size_t c = 0;
  for (; c + 8 <= cols; c += 8) {
    __m256d lo[PB], hi[PB];
    for (std::size_t k = 0; k < PB; ++k) lo[k] = hi[k] = _mm256_setzero_pd();
    for (std::size_t q = 0; q < q_count; ++q) {
      const double* bq = b + q * cols + c;
      const __m256d b0 = _mm256_loadu_pd(bq);
      const __m256d b1 = _mm256_loadu_pd(bq + 4);
      for (std::size_t k = 0; k < PB; ++k) {
        const __m256d av = _mm256_broadcast_sd(a + k * sap + q * saq);
        lo[k] = _mm256_fmadd_pd(av, b0, lo[k]);
        hi[k] = _mm256_fmadd_pd(av, b1, hi[k]);
      }
    }
    for (std::size_t k = 0; k < PB; ++k) {
      double* o = out + k * ldo + c;
      _mm256_storeu_pd(o, _mm256_add_pd(_mm256_loadu_pd(o), lo[k]));
      _mm256_storeu_pd(o + 4, _mm256_add_pd(_mm256_loadu_pd(o + 4), hi[k]));
    }
  }
  for (; c + 4 <= cols; c += 4) {
    __m256d acc[PB];
    for (std::size_t k = 0; k < PB; ++k) acc[k] = _mm256_setzero_pd();
    for (std::size_t q = 0; q < q_count; ++q) {
      const __m256d b0 = _mm256_loadu_pd(b + q * cols + c);
      for (std::size_t k = 0; k < PB; ++k) {
        acc[k] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + k * sap + q * saq), b0, acc[k]);
      }
    }
    for (std::size_t k = 0; k < PB; ++k) {
      double* o = out + k * ldo + c;
      _mm256_storeu_pd(o, _mm256_add_pd(_mm256_loadu_pd(o), acc[k]));
    }
  }
  for (; c < cols; ++c) {
    for (std::size_t k = 0; k < PB; ++k) {
      double acc = 0.0;
      for (std::size_t q = 0; q < q_count; ++q) acc += a[k * sap + q * saq] * b[q * cols + c];
      out[k * ldo + c] += acc;
    }
  }
}

void rank_update(double* out, std::size_t p_count, const double* a, std::size_t sap,
                 std::size_t saq, const double* b, std::size_t q_count, std::size_t cols) {
  std::size_t p = 0;
  for (; p + 4 <= p_count; p += 4) {
    rank_update_block<4>(out + p * cols, cols, a + p * sap, sap, saq, b, q_count, cols);
  }
  for (; p < p_count; ++p) {
    rank_update_block<1>(out + p * cols, cols, a + p * sap, sap, saq, b, q_count, cols);
  }
}

void gemm_nn_acc_avx2(const double* w, std::size_t rows, std::size_t cols, const double* g,
                      std::size_t n, double* dx) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    rank_update_block<4>(dx + i * cols, cols, g + i * rows, rows, 1, w, rows, cols);
  }
  // leftover rows keep the zero-skipping axpy form (ReLU gradients are sparse)
  for (; i < n; ++i) gemv_t_acc_avx2(w, rows, cols, g + i * rows, dx + i * cols);
}

void gemm_tn_acc_avx2(double* dw, std::size_t rows, std::size_t cols, const double* g,
                      const double* x, std::size_t n) {
  rank_update(dw, rows, g, 1, rows, x, n, cols);
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{dot_avx2,         axpy_avx2,       gemv_avx2,
                                 gemv_t_acc_avx2,  ger_acc_avx2,    gemm_nt_avx2,
                                 gemm_nn_acc_avx2, gemm_tn_acc_avx2};
  return table;
}

}  // namespace explore::simd
