// kernels.hpp - complex-double matrix kernels with runtime ISA dispatch
//
// Scalar reference implementations and an AVX2+FMA variant of the same
// kernels. The active variant is picked once at startup from CPUID and can be
// overridden (tests run both paths and compare). All kernels operate on
// column-major complex<double> buffers, matching Eigen's default layout.
#pragma once

#include <complex>
#include <cstddef>

namespace spinrelax::kernels {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa) noexcept;

// Highest ISA supported by the running CPU.
Isa detect_isa() noexcept;

// Currently selected ISA (defaults to detect_isa()).
Isa active_isa() noexcept;

// Override the selected ISA; requesting an unsupported ISA falls back to
// scalar. Returns the ISA actually selected.
Isa select_isa(Isa isa) noexcept;

// C (m x n) = A (m x k) * B (k x n), column-major, leading dimensions lda/ldb/ldc.
void zgemm_nn(std::size_t m, std::size_t n, std::size_t k,
              const std::complex<double>* a, std::size_t lda,
              const std::complex<double>* b, std::size_t ldb,
              std::complex<double>* c, std::size_t ldc);

// C (m x n) = A (m x k) * B^dagger where B is (n x k).
void zgemm_nh(std::size_t m, std::size_t n, std::size_t k,
              const std::complex<double>* a, std::size_t lda,
              const std::complex<double>* b, std::size_t ldb,
              std::complex<double>* c, std::size_t ldc);

// y += alpha * x
void zaxpy(std::size_t n, std::complex<double> alpha,
           const std::complex<double>* x, std::complex<double>* y);

namespace detail {

void zgemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k,
                     const std::complex<double>* a, std::size_t lda,
                     const std::complex<double>* b, std::size_t ldb,
                     std::complex<double>* c, std::size_t ldc);
void zgemm_nh_scalar(std::size_t m, std::size_t n, std::size_t k,
                     const std::complex<double>* a, std::size_t lda,
                     const std::complex<double>* b, std::size_t ldb,
                     std::complex<double>* c, std::size_t ldc);
void zaxpy_scalar(std::size_t n, std::complex<double> alpha,
                  const std::complex<double>* x, std::complex<double>* y);

#if defined(__x86_64__) || defined(_M_X64)
#define SPINRELAX_HAVE_AVX2_KERNELS 1
void zgemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k,
                   const std::complex<double>* a, std::size_t lda,
                   const std::complex<double>* b, std::size_t ldb,
                   std::complex<double>* c, std::size_t ldc);
void zgemm_nh_avx2(std::size_t m, std::size_t n, std::size_t k,
                   const std::complex<double>* a, std::size_t lda,
                   const std::complex<double>* b, std::size_t ldb,
                   std::complex<double>* c, std::size_t ldc);
void zaxpy_avx2(std::size_t n, std::complex<double> alpha,
                const std::complex<double>* x, std::complex<double>* y);
#endif

}  // namespace detail

}  // namespace spinrelax::kernels
