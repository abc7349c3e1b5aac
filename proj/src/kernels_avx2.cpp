// kernels_avx2.cpp - AVX2+FMA variants of the complex kernels
//
// Compiled with per-function target attributes so the translation unit builds
// without global -mavx2; the dispatcher only calls these after a CPUID check.

#include "spinrelax/kernels.hpp"

#if defined(SPINRELAX_HAVE_AVX2_KERNELS)

#include <immintrin.h>

namespace spinrelax::kernels::detail {

namespace {

// acc += v * (br + i*bi) for two packed complex doubles [re0 im0 re1 im1].
// Even lanes: re*br - im*bi, odd lanes: im*br + re*bi.
#if defined(__GNUC__) || defined(__clang__)
__attribute__((target("avx2,fma")))
#endif
inline __m256d cmul_acc(__m256d acc, __m256d v, __m256d br, __m256d bi) {
    const __m256d vs = _mm256_permute_pd(v, 0x5);
    return _mm256_add_pd(acc, _mm256_fmaddsub_pd(v, br, _mm256_mul_pd(vs, bi)));
}

#if defined(__GNUC__) || defined(__clang__)
__attribute__((target("avx2,fma")))
#endif
void column_axpy(std::size_t m, std::complex<double> alpha,
                 const std::complex<double>* x, std::complex<double>* y) {
    const __m256d br = _mm256_set1_pd(alpha.real());
    const __m256d bi = _mm256_set1_pd(alpha.imag());
    auto* yd = reinterpret_cast<double*>(y);
    const auto* xd = reinterpret_cast<const double*>(x);
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const __m256d xv = _mm256_loadu_pd(xd + 2 * i);
        const __m256d yv = _mm256_loadu_pd(yd + 2 * i);
        _mm256_storeu_pd(yd + 2 * i, cmul_acc(yv, xv, br, bi));
    }
    for (; i < m; ++i) y[i] += alpha * x[i];
}

}  // namespace

void zaxpy_avx2(std::size_t n, std::complex<double> alpha,
                const std::complex<double>* x, std::complex<double>* y) {
    column_axpy(n, alpha, x, y);
}

void zgemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k,
                   const std::complex<double>* a, std::size_t lda,
                   const std::complex<double>* b, std::size_t ldb,
                   std::complex<double>* c, std::size_t ldc) {
    for (std::size_t j = 0; j < n; ++j) {
        std::complex<double>* cj = c + j * ldc;
        for (std::size_t i = 0; i < m; ++i) cj[i] = { 0.0, 0.0 };
        for (std::size_t l = 0; l < k; ++l) {
            const std::complex<double> blj = b[l + j * ldb];
            if (blj == std::complex<double>{ 0.0, 0.0 }) continue;
            column_axpy(m, blj, a + l * lda, cj);
        }
    }
}

void zgemm_nh_avx2(std::size_t m, std::size_t n, std::size_t k,
                   const std::complex<double>* a, std::size_t lda,
                   const std::complex<double>* b, std::size_t ldb,
                   std::complex<double>* c, std::size_t ldc) {
    for (std::size_t j = 0; j < n; ++j) {
        std::complex<double>* cj = c + j * ldc;
        for (std::size_t i = 0; i < m; ++i) cj[i] = { 0.0, 0.0 };
        for (std::size_t l = 0; l < k; ++l) {
            const std::complex<double> blj = std::conj(b[j + l * ldb]);
            if (blj == std::complex<double>{ 0.0, 0.0 }) continue;
            column_axpy(m, blj, a + l * lda, cj);
        }
    }
}

}  // namespace spinrelax::kernels::detail

#endif  // SPINRELAX_HAVE_AVX2_KERNELS
