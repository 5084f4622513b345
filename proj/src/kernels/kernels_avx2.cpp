// Compiled with -mavx2; only reached after a CPUID check in dispatch.cpp.
// No FMA: elementwise kernels stay bit-identical to the scalar reference.

#include <immintrin.h>

#include "nncert/kernels.hpp"

namespace nncert::kernels {
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
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1,
                         _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale_avx2(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] = alpha * x[i];
}

void relu_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  // max_pd(a, b) returns b unless a > b, which matches `a > 0 ? a : 0`
  // including for NaN and -0.0.
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void affine_avx2(const double* a, std::size_t rows, std::size_t cols, const double* x,
                 const double* c, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_avx2(a + r * cols, x, cols) + c[r];
}

void interval_affine_avx2(const double* a, std::size_t rows, std::size_t cols, const double* lo,
                          const double* hi, const double* c, double* out_lo, double* out_hi) {
  const __m256d zero = _mm256_setzero_pd();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = a + r * cols;
    __m256d up = _mm256_setzero_pd();
    __m256d down = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      const __m256d vw = _mm256_loadu_pd(w + j);
      const __m256d pos = _mm256_max_pd(vw, zero);
      const __m256d neg = _mm256_min_pd(vw, zero);
      const __m256d vlo = _mm256_loadu_pd(lo + j);
      const __m256d vhi = _mm256_loadu_pd(hi + j);
      up = _mm256_add_pd(up, _mm256_add_pd(_mm256_mul_pd(pos, vhi), _mm256_mul_pd(neg, vlo)));
      down = _mm256_add_pd(down, _mm256_add_pd(_mm256_mul_pd(pos, vlo), _mm256_mul_pd(neg, vhi)));
    }
    double su = hsum(up);
    double sd = hsum(down);
    for (; j < cols; ++j) {
      if (w[j] > 0.0) {
        su += w[j] * hi[j];
        sd += w[j] * lo[j];
      } else {
        su += w[j] * lo[j];
        sd += w[j] * hi[j];
      }
    }
    out_lo[r] = sd + c[r];
    out_hi[r] = su + c[r];
  }
}

constexpr Table kAvx2{dot_avx2, axpy_avx2, scale_avx2, relu_avx2, affine_avx2,
                      interval_affine_avx2};

}  // namespace

const Table* avx2_table_impl() noexcept { return &kAvx2; }

}  // namespace nncert::kernels
