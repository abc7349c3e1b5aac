// test_kernels.cpp - scalar/SIMD kernel equivalence against Eigen reference

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spinrelax/kernels.hpp"
#include "spinrelax/types.hpp"

#include <random>

using namespace spinrelax;
namespace k = spinrelax::kernels;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = cxd(dist(rng), dist(rng));
    }
    return m;
}

double rel_err(const Matrix& got, const Matrix& want) {
    const double scale = std::max(max_abs(want), 1e-300);
    return max_abs(Matrix(got - want)) / scale;
}

}  // namespace

TEST_CASE("zgemm_nn matches Eigen for assorted shapes") {
    std::mt19937_64 rng(7);
    const k::Isa isas[] = { k::Isa::scalar, k::Isa::avx2 };
    for (auto isa : isas) {
        if (k::select_isa(isa) != isa) continue;  // unsupported on this host
        for (auto [m, kk, n] : { std::array<int, 3>{ 1, 1, 1 }, { 2, 3, 4 }, { 5, 5, 5 },
                                 { 7, 3, 2 }, { 25, 25, 25 }, { 33, 17, 9 } }) {
            const Matrix a = random_matrix(m, kk, rng);
            const Matrix b = random_matrix(kk, n, rng);
            Matrix c(m, n);
            k::zgemm_nn(m, n, kk, a.data(), m, b.data(), kk, c.data(), m);
            CHECK(rel_err(c, a * b) < 1e-13);
        }
    }
    k::select_isa(k::detect_isa());
}

TEST_CASE("zgemm_nh computes A * B^dagger") {
    std::mt19937_64 rng(11);
    const k::Isa isas[] = { k::Isa::scalar, k::Isa::avx2 };
    for (auto isa : isas) {
        if (k::select_isa(isa) != isa) continue;
        for (auto [m, kk, n] : { std::array<int, 3>{ 3, 4, 5 }, { 16, 16, 16 }, { 9, 2, 7 } }) {
            const Matrix a = random_matrix(m, kk, rng);
            const Matrix b = random_matrix(n, kk, rng);  // B is n x k
            Matrix c(m, n);
            k::zgemm_nh(m, n, kk, a.data(), m, b.data(), n, c.data(), m);
            CHECK(rel_err(c, a * b.adjoint()) < 1e-13);
        }
    }
    k::select_isa(k::detect_isa());
}

TEST_CASE("scalar and AVX2 paths agree") {
    if (k::detect_isa() != k::Isa::avx2) return;  // nothing to compare on this host
    std::mt19937_64 rng(13);
    const Matrix a = random_matrix(31, 31, rng);
    const Matrix b = random_matrix(31, 31, rng);
    Matrix c_scalar(31, 31), c_avx(31, 31);
    k::select_isa(k::Isa::scalar);
    k::zgemm_nn(31, 31, 31, a.data(), 31, b.data(), 31, c_scalar.data(), 31);
    k::select_isa(k::Isa::avx2);
    k::zgemm_nn(31, 31, 31, a.data(), 31, b.data(), 31, c_avx.data(), 31);
    CHECK(rel_err(c_avx, c_scalar) < 1e-13);
    k::select_isa(k::detect_isa());
}

TEST_CASE("zaxpy accumulates on both paths") {
    std::mt19937_64 rng(17);
    const Matrix x = random_matrix(37, 1, rng);
    const cxd alpha(0.7, -0.3);
    for (auto isa : { k::Isa::scalar, k::Isa::avx2 }) {
        if (k::select_isa(isa) != isa) continue;
        Matrix y = random_matrix(37, 1, rng);
        const Matrix want = y + alpha * x;
        k::zaxpy(37, alpha, x.data(), y.data());
        CHECK(rel_err(y, want) < 1e-14);
    }
    k::select_isa(k::detect_isa());
}
