// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops used by the tensor engine. Every kernel
// has a portable scalar reference and an AVX2/FMA variant; the public entry
// points forward to whichever backend is active. All matrices are row-major.
//
// The AVX2 variants fuse multiply-adds and reorder the final accumulation, so
// they agree with the scalar reference to rounding, not bit-for-bit. A given
// backend is deterministic run to run.

namespace guidelab::kernels {

enum class Backend { Scalar, Avx2 };

/// True when the CPU reports both AVX2 and FMA.
bool avx2_available() noexcept;

/// Backend chosen at startup: AVX2 when available, unless the environment
/// variable GUIDELAB_KERNELS=scalar is set.
Backend active_backend() noexcept;

/// Overrides the active backend. Requesting Avx2 on a CPU without it throws.
void set_backend(Backend backend);

std::string_view backend_name(Backend backend) noexcept;

// c[m x n] (+)= a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
// c[m x n] (+)= a[m x k] * transpose(b[n x k])
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
// c[k x n] (+)= transpose(a[m x k]) * b[m x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
// y += alpha * x
void axpy(std::size_t n, double alpha, const double* x, double* y);
double dot(std::size_t n, const double* x, const double* y);

namespace scalar {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void axpy(std::size_t n, double alpha, const double* x, double* y);
double dot(std::size_t n, const double* x, const double* y);
}  // namespace scalar

namespace avx2 {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void axpy(std::size_t n, double alpha, const double* x, double* y);
double dot(std::size_t n, const double* x, const double* y);
}  // namespace avx2

}  // namespace guidelab::kernels
