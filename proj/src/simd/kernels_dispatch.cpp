// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "guidelab/simd/kernels.hpp"

namespace guidelab::kernels {

namespace {

Backend detect() noexcept {
    if (const char* env = std::getenv("GUIDELAB_KERNELS"); env != nullptr && std::string(env) == "scalar") {
        return Backend::Scalar;
    }
    return avx2_available() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> backend{detect()};
    return backend;
}

}  // namespace

bool avx2_available() noexcept {
#if defined(GUIDELAB_HAVE_AVX2_KERNELS) && (defined(__x86_64__) || defined(__i386__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
    if (backend == Backend::Avx2 && !avx2_available()) {
        throw std::runtime_error("AVX2 backend requested but not supported on this CPU");
    }
    current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) noexcept {
    return backend == Backend::Avx2 ? "avx2" : "scalar";
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    if (active_backend() == Backend::Avx2) return avx2::gemm_nn(m, n, k, a, b, c, accumulate);
    scalar::gemm_nn(m, n, k, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    if (active_backend() == Backend::Avx2) return avx2::gemm_nt(m, n, k, a, b, c, accumulate);
    scalar::gemm_nt(m, n, k, a, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    if (active_backend() == Backend::Avx2) return avx2::gemm_tn(m, n, k, a, b, c, accumulate);
    scalar::gemm_tn(m, n, k, a, b, c, accumulate);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    if (active_backend() == Backend::Avx2) return avx2::axpy(n, alpha, x, y);
    scalar::axpy(n, alpha, x, y);
}

double dot(std::size_t n, const double* x, const double* y) {
    if (active_backend() == Backend::Avx2) return avx2::dot(n, x, y);
    return scalar::dot(n, x, y);
}

}  // namespace guidelab::kernels
