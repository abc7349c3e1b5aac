// kernels.cpp - runtime ISA detection and dispatch

#include "spinrelax/kernels.hpp"

namespace spinrelax::kernels {

namespace {

Isa probe_cpu() noexcept {
#if defined(SPINRELAX_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
    return Isa::scalar;
}

Isa g_active = probe_cpu();

}  // namespace

const char* isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::avx2: return "avx2";
        case Isa::scalar: return "scalar";
    }
    return "unknown";
}

Isa detect_isa() noexcept { return probe_cpu(); }

Isa active_isa() noexcept { return g_active; }

Isa select_isa(Isa isa) noexcept {
    if (isa == Isa::avx2 && probe_cpu() != Isa::avx2) isa = Isa::scalar;
    g_active = isa;
    return g_active;
}

void zgemm_nn(std::size_t m, std::size_t n, std::size_t k,
              const std::complex<double>* a, std::size_t lda,
              const std::complex<double>* b, std::size_t ldb,
              std::complex<double>* c, std::size_t ldc) {
#if defined(SPINRELAX_HAVE_AVX2_KERNELS)
    if (g_active == Isa::avx2) {
        detail::zgemm_nn_avx2(m, n, k, a, lda, b, ldb, c, ldc);
        return;
    }
#endif
    detail::zgemm_nn_scalar(m, n, k, a, lda, b, ldb, c, ldc);
}

void zgemm_nh(std::size_t m, std::size_t n, std::size_t k,
              const std::complex<double>* a, std::size_t lda,
              const std::complex<double>* b, std::size_t ldb,
              std::complex<double>* c, std::size_t ldc) {
#if defined(SPINRELAX_HAVE_AVX2_KERNELS)
    if (g_active == Isa::avx2) {
        detail::zgemm_nh_avx2(m, n, k, a, lda, b, ldb, c, ldc);
        return;
    }
#endif
    detail::zgemm_nh_scalar(m, n, k, a, lda, b, ldb, c, ldc);
}

void zaxpy(std::size_t n, std::complex<double> alpha,
           const std::complex<double>* x, std::complex<double>* y) {
#if defined(SPINRELAX_HAVE_AVX2_KERNELS)
    if (g_active == Isa::avx2) {
        detail::zaxpy_avx2(n, alpha, x, y);
        return;
    }
#endif
    detail::zaxpy_scalar(n, alpha, x, y);
}

}  // namespace spinrelax::kernels
