// nonsecular.cpp

#include "spinrelax/nonsecular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace spinrelax::solver {

namespace {

double population_overlap_of(const Vector& v, int dim, const Matrix* to_observable) {
    if (to_observable == nullptr) {
        double diag = 0.0;
        for (int m = 0; m < dim; ++m) diag += std::norm(v(flat_index(m, m, dim)));
        const double total = v.squaredNorm();
        return total > 0.0 ? diag / total : 0.0;
    }
    Matrix rho(dim, dim);
    for (int m = 0; m < dim; ++m) {
        for (int k = 0; k < dim; ++k) rho(m, k) = v(flat_index(m, k, dim));
    }
    rho = (*to_observable) * rho * to_observable->adjoint();
    const double total = rho.squaredNorm();
    return total > 0.0 ? rho.diagonal().squaredNorm() / total : 0.0;
}

}  // namespace

GeneratorSpectrum spectrum(const redfield::EffectiveGenerator& g, const SpectrumOptions& opt) {
    if (!g.matrix.allFinite()) throw std::invalid_argument("spectrum: generator has non-finite entries");
    const Eigen::Index nn = g.matrix.rows();

    Eigen::ComplexEigenSolver<Matrix> solver(g.matrix, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("spectrum: complex eigensolver did not converge");
    }

    std::vector<Eigen::Index> order(nn);
    std::iota(order.begin(), order.end(), Eigen::Index{ 0 });
    const Vector& ev = solver.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&ev](Eigen::Index a, Eigen::Index b) {
        const double ra = std::abs(ev(a).real()), rb = std::abs(ev(b).real());
        if (ra != rb) return ra < rb;
        if (ev(a).real() != ev(b).real()) return ev(a).real() < ev(b).real();
        return ev(a).imag() < ev(b).imag();
    });

    GeneratorSpectrum sp;
    sp.dim = g.dim;
    sp.eigenvalues.resize(nn);
    sp.right.resize(nn, nn);
    for (Eigen::Index i = 0; i < nn; ++i) {
        sp.eigenvalues(i) = ev(order[i]);
        sp.right.col(i) = solver.eigenvectors().col(order[i]);
    }
    Eigen::FullPivLU<Matrix> lu(sp.right);
    if (!lu.isInvertible()) {
        throw std::runtime_error("spectrum: defective generator (eigenvector matrix singular)");
    }
    sp.left = lu.inverse();

    double max_abs_re = 0.0, max_re = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < nn; ++i) {
        max_abs_re = std::max(max_abs_re, std::abs(sp.eigenvalues(i).real()));
        max_re = std::max(max_re, sp.eigenvalues(i).real());
    }
    double scale = max_abs_re;
    if (scale == 0.0) scale = sp.eigenvalues.cwiseAbs().maxCoeff();
    if (scale == 0.0) scale = 1.0;
    sp.stationary_tol = opt.stationary_tol_factor * scale;
    sp.max_real_part = max_re;

    for (Eigen::Index i = 0; i < nn; ++i) {
        if (std::abs(sp.eigenvalues(i)) < sp.stationary_tol) {
            if (sp.stationary_index < 0) sp.stationary_index = static_cast<int>(i);
            ++sp.stationary_count;
        }
    }

    // Distance of the eigenvalue set from closure under conjugation.
    double closure = 0.0;
    for (Eigen::Index i = 0; i < nn; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < nn; ++j) {
            best = std::min(best, std::abs(sp.eigenvalues(i) - std::conj(sp.eigenvalues(j))));
        }
        closure = std::max(closure, best);
    }
    sp.conjugation_closure = closure / scale;
    return sp;
}

SlowMode slow_rate(const GeneratorSpectrum& sp, double overlap_threshold,
                   const Matrix* to_observable) {
    const Eigen::Index nn = sp.eigenvalues.size();
    SlowMode best;
    double best_unfiltered = std::numeric_limits<double>::infinity();
    std::vector<double> candidate_res;
    for (Eigen::Index i = 0; i < nn; ++i) {
        if (std::abs(sp.eigenvalues(i)) < sp.stationary_tol) continue;
        const double re = std::abs(sp.eigenvalues(i).real());
        candidate_res.push_back(re);
        best_unfiltered = std::min(best_unfiltered, re);
        const double overlap = population_overlap_of(sp.right.col(i), sp.dim, to_observable);
        if (overlap < overlap_threshold) continue;
        bool take = best.index < 0;
        if (!take) {
            const double cur = best.rate;
            const double tie = 1e-12 * std::max(re, cur);
            if (re < cur - tie) {
                take = true;
            } else if (std::abs(re - cur) <= tie) {
                if (overlap > best.population_overlap + 1e-12) {
                    take = true;
                } else if (std::abs(overlap - best.population_overlap) <= 1e-12 &&
                           std::abs(sp.eigenvalues(i).imag()) < std::abs(best.eigenvalue.imag())) {
                    take = true;
                }
            }
        }
        if (take) {
            best.rate = re;
            best.eigenvalue = sp.eigenvalues(i);
            best.index = static_cast<int>(i);
            best.eigenvector = sp.right.col(i);
            best.population_overlap = overlap;
        }
    }
    if (best.index < 0) {
        std::ostringstream os;
        os << "slow_rate: no mode with population overlap >= " << overlap_threshold
           << "; smallest unfiltered |Re| = " << best_unfiltered;
        throw std::runtime_error(os.str());
    }
    double next = std::numeric_limits<double>::infinity();
    for (double re : candidate_res) {
        if (re > best.rate * (1.0 + 1e-12)) next = std::min(next, re);
    }
    best.gap_ratio = std::isfinite(next) && best.rate > 0.0 ? next / best.rate : 0.0;
    return best;
}

Matrix stationary_state(const GeneratorSpectrum& sp) {
    if (sp.stationary_count == 0) {
        throw std::runtime_error("stationary_state: no eigenvalue within the stationary tolerance");
    }
    if (sp.stationary_count > 1) {
        std::ostringstream os;
        os << "stationary_state: " << sp.stationary_count
           << " stationary eigenvalues (decoupled sectors)";
        throw std::runtime_error(os.str());
    }
    const int n = sp.dim;
    const Vector v = sp.right.col(sp.stationary_index);
    Matrix rho(n, n);
    for (int m = 0; m < n; ++m) {
        for (int k = 0; k < n; ++k) rho(m, k) = v(flat_index(m, k, n));
    }
    rho = 0.5 * (rho + rho.adjoint()).eval();
    const cxd tr = rho.trace();
    if (std::abs(tr) < 1e-12 * std::max(max_abs(rho), 1e-300)) {
        throw std::runtime_error("stationary_state: stationary vector is traceless");
    }
    rho /= tr;
    return rho;
}

Trajectory propagate(const Matrix& rho0, const redfield::EffectiveGenerator& g,
                     const std::vector<double>& times, double condition_bound) {
    const int n = g.dim;
    if (rho0.rows() != n || rho0.cols() != n) {
        throw std::invalid_argument("propagate: dimension mismatch");
    }
    if (!is_hermitian(rho0, 1e-10)) throw std::invalid_argument("propagate: rho0 is not Hermitian");
    if (std::abs(rho0.trace() - cxd(1.0, 0.0)) > 1e-10) {
        throw std::invalid_argument("propagate: rho0 must have unit trace");
    }
    const GeneratorSpectrum sp = spectrum(g);
    const double cond = sp.right.cwiseAbs().colwise().sum().maxCoeff() *
                        sp.left.cwiseAbs().colwise().sum().maxCoeff();
    if (cond > condition_bound) {
        std::ostringstream os;
        os << "propagate: eigenvector matrix condition estimate " << cond << " exceeds bound "
           << condition_bound;
        throw std::runtime_error(os.str());
    }

    Vector v0(static_cast<Eigen::Index>(n) * n);
    for (int m = 0; m < n; ++m) {
        for (int k = 0; k < n; ++k) v0(flat_index(m, k, n)) = rho0(m, k);
    }
    const Vector coeff = sp.left * v0;

    Trajectory traj;
    traj.times = times;
    traj.states.reserve(times.size());
    for (double t : times) {
        Vector amp = coeff;
        for (Eigen::Index i = 0; i < amp.size(); ++i) amp(i) *= std::exp(sp.eigenvalues(i) * t);
        const Vector vt = sp.right * amp;
        Matrix rho(n, n);
        for (int m = 0; m < n; ++m) {
            for (int k = 0; k < n; ++k) rho(m, k) = vt(flat_index(m, k, n));
        }
        traj.max_trace_drift = std::max(traj.max_trace_drift, std::abs(rho.trace() - cxd(1.0, 0.0)));
        traj.max_hermiticity_drift = std::max(traj.max_hermiticity_drift, hermiticity_violation(rho));
        traj.states.push_back(std::move(rho));
    }
    return traj;
}

}  // namespace spinrelax::solver
