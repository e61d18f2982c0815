#include <immintrin.h>

#include <cmath>

#include "lkmrl/kernels.hpp"

// Compiled with -mavx2 -mfma; only reached through the dispatch table after
// a CPUID check.

namespace lkmrl::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(s, s);
  return _mm_cvtsd_f64(_mm_add_sd(s, sh));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void affine_avx2(const double* w, const double* x, const double* b, double* y,
                 std::size_t rows, std::size_t cols) {
  std::size_t r = 0;
  // Four rows at a time share the x loads.
  for (; r + 4 <= rows; r += 4) {
    const double* w0 = w + r * cols;
    const double* w1 = w0 + cols;
    const double* w2 = w1 + cols;
    const double* w3 = w2 + cols;
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d vx = _mm256_loadu_pd(x + c);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + c), vx, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + c), vx, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + c), vx, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + c), vx, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; c < cols; ++c) {
      s0 += w0[c] * x[c];
      s1 += w1[c] * x[c];
      s2 += w2[c] * x[c];
      s3 += w3[c] * x[c];
    }
    y[r] = b[r] + s0;
    y[r + 1] = b[r + 1] + s1;
    y[r + 2] = b[r + 2] + s2;
    y[r + 3] = b[r + 3] + s3;
  }
  for (; r < rows; ++r) y[r] = b[r] + dot_avx2(w + r * cols, x, cols);
}

void affine_transpose_accumulate_avx2(const double* w, const double* d,
                                      double* out, std::size_t rows,
                                      std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] != 0.0) axpy_avx2(d[r], w + r * cols, out, cols);
  }
}

void outer_accumulate_avx2(const double* d, const double* x, double* g,
                           std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] != 0.0) axpy_avx2(d[r], x, g + r * cols, cols);
  }
}

void adam_ascent_avx2(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bias1, double bias2) {
  const __m256d b1 = _mm256_set1_pd(beta1), nb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d b2 = _mm256_set1_pd(beta2), nb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
  const __m256d vb1 = _mm256_set1_pd(bias1), vb2 = _mm256_set1_pd(bias2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    const __m256d vm = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(nb1, vg));
    const __m256d vv = _mm256_add_pd(
        _mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
        _mm256_mul_pd(_mm256_mul_pd(nb2, vg), vg));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(vm, vb1);
    const __m256d vhat = _mm256_div_pd(vv, vb2);
    const __m256d step = _mm256_div_pd(
        _mm256_mul_pd(vlr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), veps));
    _mm256_storeu_pd(p + i, _mm256_add_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] += lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + eps);
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      "avx2",
      dot_avx2,
      axpy_avx2,
      affine_avx2,
      affine_transpose_accumulate_avx2,
      outer_accumulate_avx2,
      adam_ascent_avx2,
  };
  return table;
}

}  // namespace lkmrl::kernels
