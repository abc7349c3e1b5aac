// kernels_scalar.cpp - reference implementations of the complex kernels
//
// These are the semantic definition of every kernel; the SIMD variants are
// equivalence-tested against them.

#include "spinrelax/kernels.hpp"

namespace spinrelax::kernels::detail {

void zaxpy_scalar(std::size_t n, std::complex<double> alpha,
                  const std::complex<double>* x, std::complex<double>* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Column-by-column accumulation: C(:,j) = sum_l A(:,l) * B(l,j).
// Same loop order as the AVX2 variant so the two differ only in rounding of
// the fused multiplies.
void zgemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k,
                     const std::complex<double>* a, std::size_t lda,
                     const std::complex<double>* b, std::size_t ldb,
                     std::complex<double>* c, std::size_t ldc) {
    for (std::size_t j = 0; j < n; ++j) {
        std::complex<double>* cj = c + j * ldc;
        for (std::size_t i = 0; i < m; ++i) cj[i] = { 0.0, 0.0 };
        for (std::size_t l = 0; l < k; ++l) {
            const std::complex<double> blj = b[l + j * ldb];
            if (blj == std::complex<double>{ 0.0, 0.0 }) continue;
            const std::complex<double>* al = a + l * lda;
            for (std::size_t i = 0; i < m; ++i) cj[i] += al[i] * blj;
        }
    }
}

void zgemm_nh_scalar(std::size_t m, std::size_t n, std::size_t k,
                     const std::complex<double>* a, std::size_t lda,
                     const std::complex<double>* b, std::size_t ldb,
                     std::complex<double>* c, std::size_t ldc) {
    // B^dagger(l, j) = conj(B(j, l)); B is n x k.
    for (std::size_t j = 0; j < n; ++j) {
        std::complex<double>* cj = c + j * ldc;
        for (std::size_t i = 0; i < m; ++i) cj[i] = { 0.0, 0.0 };
        for (std::size_t l = 0; l < k; ++l) {
            const std::complex<double> blj = std::conj(b[j + l * ldb]);
            if (blj == std::complex<double>{ 0.0, 0.0 }) continue;
            const std::complex<double>* al = a + l * lda;
            for (std::size_t i = 0; i < m; ++i) cj[i] += al[i] * blj;
        }
    }
}

}  // namespace spinrelax::kernels::detail
