// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

// Built with -mavx2 -mfma. Nothing here runs unless dispatch confirmed the CPU
// supports both extensions.

#include "guidelab/simd/kernels.hpp"

#include <algorithm>
#include <stdexcept>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

namespace guidelab::kernels::avx2 {

#if defined(__AVX2__) && defined(__FMA__)

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

// One output row, all columns: crow (+)= arow * b.
inline void row_times_matrix(std::size_t n, std::size_t k, const double* arow, const double* b, double* crow) {
    for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(arow[p]);
        const double* brow = b + p * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d cv = _mm256_loadu_pd(crow + j);
            cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), cv);
            _mm256_storeu_pd(crow + j, cv);
        }
        for (; j < n; ++j) crow[j] += arow[p] * brow[j];
    }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    std::size_t i = 0;
    // 4x8 register tile: four rows of a against two vectors of b.
    for (; i + 4 <= m; i += 4) {
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d acc[4][2];
            for (auto& r : acc) r[0] = r[1] = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
                const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
                for (std::size_t r = 0; r < 4; ++r) {
                    const __m256d av = _mm256_set1_pd(a[(i + r) * k + p]);
                    acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
                }
            }
            for (std::size_t r = 0; r < 4; ++r) {
                double* dst = c + (i + r) * n + j;
                if (accumulate) {
                    acc[r][0] = _mm256_add_pd(acc[r][0], _mm256_loadu_pd(dst));
                    acc[r][1] = _mm256_add_pd(acc[r][1], _mm256_loadu_pd(dst + 4));
                }
                _mm256_storeu_pd(dst, acc[r][0]);
                _mm256_storeu_pd(dst + 4, acc[r][1]);
            }
        }
        for (; j < n; ++j) {
            for (std::size_t r = 0; r < 4; ++r) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += a[(i + r) * k + p] * b[p * n + j];
                double& dst = c[(i + r) * n + j];
                dst = accumulate ? dst + s : s;
            }
        }
    }
    for (; i < m; ++i) {
        double* crow = c + i * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        row_times_matrix(n, k, a + i * k, b, crow);
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
            __m256d acc2 = _mm256_setzero_pd(), acc3 = _mm256_setzero_pd();
            const double* b0 = b + (j + 0) * k;
            const double* b1 = b + (j + 1) * k;
            const double* b2 = b + (j + 2) * k;
            const double* b3 = b + (j + 3) * k;
            std::size_t p = 0;
            for (; p + 4 <= k; p += 4) {
                const __m256d av = _mm256_loadu_pd(arow + p);
                acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), acc0);
                acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), acc1);
                acc2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), acc2);
                acc3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), acc3);
            }
            double s[4] = {hsum(acc0), hsum(acc1), hsum(acc2), hsum(acc3)};
            for (; p < k; ++p) {
                s[0] += arow[p] * b0[p];
                s[1] += arow[p] * b1[p];
                s[2] += arow[p] * b2[p];
                s[3] += arow[p] * b3[p];
            }
            for (std::size_t r = 0; r < 4; ++r) {
                double& dst = c[i * n + j + r];
                dst = accumulate ? dst + s[r] : s[r];
            }
        }
        for (; j < n; ++j) {
            const double s = dot(k, arow, b + j * k);
            double& dst = c[i * n + j];
            dst = accumulate ? dst + s : s;
        }
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    if (!accumulate) std::fill(c, c + k * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) axpy(n, arow[p], brow, c + p * n);
    }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot(std::size_t n, const double* x, const double* y) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

#else

namespace {
[[noreturn]] void unavailable() { throw std::runtime_error("AVX2 kernels were not compiled for this target"); }
}  // namespace

void gemm_nn(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool) { unavailable(); }
void gemm_nt(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool) { unavailable(); }
void gemm_tn(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool) { unavailable(); }
void axpy(std::size_t, double, const double*, double*) { unavailable(); }
double dot(std::size_t, const double*, const double*) { unavailable(); }

#endif

}  // namespace guidelab::kernels::avx2
