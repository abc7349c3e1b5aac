// types.hpp - shared scalar/matrix aliases and small numeric helpers
#pragma once

#include <Eigen/Dense>

#include <complex>

namespace spinrelax {

using cxd = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

// Internal unit system: hbar = k_B = 1. Energies, temperatures (as k_B*T) and
// rates all carry the single user-declared energy unit.

// Flattened superoperator index: density-matrix element (m, n) -> m*dim + n.
// Fixed row-major convention shared by every module and by the dump format.
inline Eigen::Index flat_index(Eigen::Index m, Eigen::Index n, Eigen::Index dim) noexcept {
    return m * dim + n;
}

inline double max_abs(const Matrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double max_abs(const RealMatrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double hermiticity_violation(const Matrix& a) {
    return max_abs(Matrix(a - a.adjoint()));
}

inline bool is_hermitian(const Matrix& a, double tol) {
    const double scale = std::max(max_abs(a), 1.0);
    return hermiticity_violation(a) <= tol * scale;
}

inline double unitarity_violation(const Matrix& u) {
    Matrix g = u.adjoint() * u;
    g -= Matrix::Identity(u.cols(), u.cols());
    return max_abs(g);
}

}  // namespace spinrelax
