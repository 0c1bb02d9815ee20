#include "spc/kernels.hpp"

#ifdef SPC_HAVE_AVX2_KERNELS

#include <immintrin.h>

#define SPC_AVX2 __attribute__((target("avx2,fma")))

namespace spc::kernels::avx2 {

namespace {

SPC_AVX2 inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

SPC_AVX2 double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

SPC_AVX2 double sum_squares(const double* a, std::size_t n) { return dot(a, a, n); }

SPC_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

SPC_AVX2 double weighted_sum_squares(const double* v, const double* w, std::size_t blocks,
                                     std::size_t block) {
    if (block >= 4) {
        double s = 0.0;
        for (std::size_t i = 0; i < blocks; ++i) s += w[i] * sum_squares(v + i * block, block);
        return s;
    }
    // Short blocks: vectorize across blocks instead of within them.
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= blocks; i += 4) {
        double sq[4];
        for (std::size_t k = 0; k < 4; ++k) {
            const double* b = v + (i + k) * block;
            double s = 0.0;
            for (std::size_t j = 0; j < block; ++j) s += b[j] * b[j];
            sq[k] = s;
        }
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(sq), acc);
    }
    double s = hsum(acc);
    for (; i < blocks; ++i) {
        const double* b = v + i * block;
        double t = 0.0;
        for (std::size_t j = 0; j < block; ++j) t += b[j] * b[j];
        s += w[i] * t;
    }
    return s;
}

}  // namespace spc::kernels::avx2

#endif
