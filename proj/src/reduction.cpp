// reduction.cpp

#include "spinrelax/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace spinrelax::reduction {

namespace {

constexpr double kSingularGuard = 1e-8;

struct PairDenominator {
    cxd d;         // R'_mm',mm' + lambda
    cxd r_off;     // R_mm',m'm
    double denom;  // |d|^2 - |r_off|^2
};

PairDenominator pair_denominator(const redfield::RedfieldTensor& r, const Matrix& h, int m, int mp,
                                 double lambda) {
    PairDenominator pd;
    pd.d = r(m, mp, m, mp) + cxd(0.0, 1.0) * (h(mp, mp) - h(m, m)) + lambda;
    pd.r_off = r(m, mp, mp, m);
    const double d2 = std::norm(pd.d);
    const double r2 = std::norm(pd.r_off);
    pd.denom = d2 - r2;
    if (d2 + r2 == 0.0 || std::abs(pd.denom) < kSingularGuard * (d2 + r2)) {
        std::ostringstream os;
        os << "reduction: resonant denominator for pair (" << m << "," << mp << "): |R'+lambda|^2 - "
           << "|R_mm',m'm|^2 = " << pd.denom << " with scale " << d2 + r2
           << "; use the semi-secular solver for this point";
        throw std::runtime_error(os.str());
    }
    return pd;
}

// Largest imaginary part relative to the rate magnitude. Individual entries
// (or whole matrices) can be cancellation zeros, so the reference never drops
// below `floor_scale`, the natural size of the assembled products.
double imag_residue(const Matrix& values, double floor_scale) {
    if (values.size() == 0) return 0.0;
    const double scale =
        std::max({ values.cwiseAbs().maxCoeff(), floor_scale, 1e-300 });
    return values.imag().cwiseAbs().maxCoeff() / scale;
}

double offdiag_max(const Matrix& h) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            if (i != j) worst = std::max(worst, std::abs(h(i, j)));
        }
    }
    return worst;
}

void check_realness(const Matrix& values, double floor_scale, const char* what) {
    const double residue = imag_residue(values, floor_scale);
    if (residue > 1e-8) {
        std::ostringstream os;
        os << what << ": imaginary residue " << residue << " exceeds 1e-8 of the magnitude";
        throw std::runtime_error(os.str());
    }
}

}  // namespace

PairTable PairTable::build(const spin::DoubletStructure& ds) {
    PairTable pt;
    pt.dim = ds.dim();
    pt.pair_of_state.assign(pt.dim, -1);
    pt.partner_of_state = ds.partner;
    for (int d = 0; d < ds.num_doublets(); ++d) {
        const auto& pr = ds.pairs[static_cast<std::size_t>(d)];
        pt.pair_of_state[pr[0]] = static_cast<int>(pt.ordered.size());
        pt.ordered.emplace_back(pr[0], pr[1]);
        pt.doublet_of_pair.push_back(d);
        pt.pair_of_state[pr[1]] = static_cast<int>(pt.ordered.size());
        pt.ordered.emplace_back(pr[1], pr[0]);
        pt.doublet_of_pair.push_back(d);
    }
    return pt;
}

cxd compute_C(const redfield::RedfieldTensor& r, const Matrix& h, int m, int mp, double lambda) {
    const PairDenominator pd = pair_denominator(r, h, m, mp, lambda);
    return cxd(0.0, -1.0) * (pd.r_off * h(mp, m) + std::conj(pd.d) * h(m, mp)) / pd.denom;
}

cxd compute_D(const redfield::RedfieldTensor& r, const Matrix& h, int m, int mp, int k, int l,
              double lambda) {
    if ((k == m && l == mp) || (k == mp && l == m)) {
        throw std::invalid_argument("compute_D: column (k,l) must not be the own coherence");
    }
    const PairDenominator pd = pair_denominator(r, h, m, mp, lambda);
    return (pd.r_off * r(mp, m, k, l) - std::conj(pd.d) * r(m, mp, k, l)) / pd.denom;
}

ReductionCoefficients compute_coefficients(const redfield::RedfieldTensor& r, const Matrix& h,
                                           const PairTable& pt, double lambda) {
    const int n = r.dim;
    const int np = pt.num_pairs();
    ReductionCoefficients coeffs;
    coeffs.lambda = lambda;
    coeffs.c.resize(np);
    coeffs.d_pop = Matrix::Zero(np, n);
    coeffs.d_coh = Matrix::Zero(np, np);
    for (int p = 0; p < np; ++p) {
        const auto [m, mp] = pt.ordered[static_cast<std::size_t>(p)];
        coeffs.c(p) = compute_C(r, h, m, mp, lambda);
        for (int k = 0; k < n; ++k) {
            coeffs.d_pop(p, k) = compute_D(r, h, m, mp, k, k, lambda);
        }
        for (int q = 0; q < np; ++q) {
            if (pt.doublet_of_pair[q] == pt.doublet_of_pair[p]) continue;  // l != m, m'
            const auto [k, kp] = pt.ordered[static_cast<std::size_t>(q)];
            coeffs.d_coh(p, q) = compute_D(r, h, m, mp, k, kp, lambda);
        }
    }
    return coeffs;
}

SeriesTables compute_fg(const ReductionCoefficients& coeffs, const PairTable& pt, int max_order,
                        double term_tol) {
    const int np = pt.num_pairs();
    SeriesTables st;
    st.f = Matrix(coeffs.c.asDiagonal());
    st.g = coeffs.d_pop;
    const double norm0 = st.f.norm() + st.g.norm();
    st.term_norms.push_back(norm0);
    st.order = 0;
    if (norm0 == 0.0 || np == 0) {
        st.converged = true;
        return st;
    }

    // The nested chains are the Neumann series of (1 - D)^-1; they diverge
    // exactly when the coherence-hop matrix has spectral radius >= 1. Term
    // norms can still bump transiently for non-normal hops, so the radius is
    // the rejection test.
    {
        Eigen::ComplexEigenSolver<Matrix> solver(coeffs.d_coh, /*computeEigenvectors=*/false);
        const double radius = solver.eigenvalues().cwiseAbs().maxCoeff();
        if (radius >= 1.0) {
            std::ostringstream os;
            os << "compute_fg: coefficient chains diverge (coherence-hop spectral radius "
               << radius << " >= 1)";
            throw std::runtime_error(os.str());
        }
    }

    Matrix chain = Matrix::Identity(np, np);
    for (int order = 1; order <= max_order; ++order) {
        chain = coeffs.d_coh * chain;
        const Matrix df = chain * Matrix(coeffs.c.asDiagonal());
        const Matrix dg = chain * coeffs.d_pop;
        const double norm = df.norm() + dg.norm();
        st.f += df;
        st.g += dg;
        st.order = order;
        st.term_norms.push_back(norm);
        if (norm <= term_tol * norm0) {
            st.converged = true;
            break;
        }
    }
    // The quoted bound never drops below the floating-point resolution of the
    // eigenproblems the rate eventually passes through.
    st.truncation_bound = std::max(st.term_norms.back() / norm0, 1e-12);
    if (!st.converged) st.converged = st.term_norms.back() / norm0 <= term_tol;
    return st;
}

double RateSet::tunneling_into_partner(const PairTable& pt, int p) const {
    // Stored columns hold Gamma_m^{rep(d)}; Gamma_m^{m'} flips sign when the
    // representative is m itself.
    const int d = pt.doublet_of_pair[p];
    const double value = tunneling(p, d);
    const int rep = pt.ordered[static_cast<std::size_t>(pt.rep_pair(d))].first;
    return pt.ordered[static_cast<std::size_t>(p)].first == rep ? -value : value;
}

RateSet compute_rates(const SeriesTables& st, const redfield::RedfieldTensor& r, const Matrix& h,
                      const PairTable& pt) {
    const int n = r.dim;
    const int np = pt.num_pairs();
    const int nd = pt.num_doublets();
    const cxd iu(0.0, 1.0);

    Matrix tunneling = Matrix::Zero(np, nd);
    for (int p = 0; p < np; ++p) {
        const auto [m, mp] = pt.ordered[static_cast<std::size_t>(p)];
        const int pc = pt.conj_index(p);
        for (int d = 0; d < nd; ++d) {
            const int q1 = pt.rep_pair(d);
            const int q2 = pt.conj_index(q1);
            tunneling(p, d) = iu * (h(mp, m) * (st.f(p, q1) - st.f(p, q2)) -
                                    h(m, mp) * (st.f(pc, q1) - st.f(pc, q2)));
        }
    }

    Matrix correction = Matrix::Zero(n, n);
    for (int m = 0; m < n; ++m) {
        const int p = pt.pair_of_state[m];
        for (int k = 0; k < n; ++k) {
            cxd val = 0.0;
            if (p >= 0) {
                const auto mp = pt.ordered[static_cast<std::size_t>(p)].second;
                val += iu * (h(mp, m) * st.g(p, k) - h(m, mp) * st.g(pt.conj_index(p), k));
            }
            const int kq = pt.pair_of_state[k];
            for (int q = 0; q < np; ++q) {
                const auto [nq, nqp] = pt.ordered[static_cast<std::size_t>(q)];
                cxd bracket = st.g(q, k);
                if (kq >= 0) {
                    bracket += st.f(q, kq) - st.f(q, pt.conj_index(kq));
                }
                val += r(m, m, nq, nqp) * bracket;
            }
            correction(m, k) = val;
        }
    }

    // Natural size of the assembled products: tensor / Hamiltonian-coupling
    // scale times the coefficient-table scale.
    const double coeff_scale = std::max({ 1.0, max_abs(st.f), max_abs(st.g) });
    const double floor_scale = (max_abs(r.elements) + offdiag_max(h)) * coeff_scale;
    check_realness(tunneling, floor_scale, "compute_rates: tunneling rates");
    check_realness(correction, floor_scale, "compute_rates: transition-rate corrections");

    RateSet rates;
    rates.tunneling = tunneling.real();
    rates.correction = correction.real();
    rates.transition = RealMatrix::Zero(n, n);
    for (int m = 0; m < n; ++m) {
        for (int k = 0; k < n; ++k) rates.transition(m, k) = r.population_rate(m, k);
    }
    rates.max_imag_residue =
        std::max(imag_residue(tunneling, floor_scale), imag_residue(correction, floor_scale));
    return rates;
}

RateSet zeroth_order_rates(const ReductionCoefficients& coeffs, const redfield::RedfieldTensor& r,
                           const Matrix& h, const PairTable& pt) {
    const int n = r.dim;
    const int np = pt.num_pairs();
    const int nd = pt.num_doublets();
    const cxd iu(0.0, 1.0);

    // Only the own-doublet tunneling rate survives at zeroth order.
    Matrix tunneling = Matrix::Zero(np, nd);
    for (int p = 0; p < np; ++p) {
        const auto [m, mp] = pt.ordered[static_cast<std::size_t>(p)];
        const int d = pt.doublet_of_pair[p];
        const cxd into_partner =
            -iu * (h(mp, m) * coeffs.c(p) + h(m, mp) * coeffs.c(pt.conj_index(p)));
        const int rep = pt.ordered[static_cast<std::size_t>(pt.rep_pair(d))].first;
        tunneling(p, d) = (m == rep) ? -into_partner : into_partner;
    }

    Matrix correction = Matrix::Zero(n, n);
    for (int m = 0; m < n; ++m) {
        const int p = pt.pair_of_state[m];
        for (int k = 0; k < n; ++k) {
            cxd t = 0.0;
            if (p >= 0) {
                const auto mp = pt.ordered[static_cast<std::size_t>(p)].second;
                t += iu * h(mp, m) * coeffs.d_pop(p, k);
            }
            const int kq = pt.pair_of_state[k];
            if (kq >= 0) {
                const int kp = pt.partner_of_state[k];
                t += r(m, m, k, kp) * coeffs.c(kq);
            }
            for (int d = 0; d < nd; ++d) {
                const int q = pt.rep_pair(d);
                const auto [nq, nqp] = pt.ordered[static_cast<std::size_t>(q)];
                t += r(m, m, nq, nqp) * coeffs.d_pop(q, k);
            }
            correction(m, k) = t + std::conj(t);
        }
    }

    const double c_scale = coeffs.c.size() > 0 ? coeffs.c.cwiseAbs().maxCoeff() : 0.0;
    const double coeff_scale = std::max({ 1.0, c_scale, max_abs(coeffs.d_pop) });
    const double floor_scale = (max_abs(r.elements) + offdiag_max(h)) * coeff_scale;
    check_realness(tunneling, floor_scale, "zeroth_order_rates: tunneling rates");

    RateSet rates;
    rates.zeroth_order = true;
    rates.tunneling = tunneling.real();
    rates.correction = correction.real();
    rates.transition = RealMatrix::Zero(n, n);
    for (int m = 0; m < n; ++m) {
        for (int k = 0; k < n; ++k) rates.transition(m, k) = r.population_rate(m, k);
    }
    rates.max_imag_residue = imag_residue(tunneling, floor_scale);
    return rates;
}

double incoherent_rate(double delta, double bias, double gamma_re, double gamma_im) {
    if (gamma_re <= 0.0) throw std::invalid_argument("incoherent_rate: gamma' must be > 0");
    const double detuning = gamma_im + bias;
    return 0.5 * delta * delta * gamma_re / (gamma_re * gamma_re + detuning * detuning);
}

RealMatrix high_t_correction(const redfield::RedfieldTensor& r, const Matrix& h,
                             const PairTable& pt, double regime_factor) {
    const int n = r.dim;
    // Premise of the high-temperature form: coherence transfer rates are much
    // smaller than the dephasing rates for every doublet.
    double worst_ratio = 0.0;
    for (int q = 0; q < pt.num_pairs(); ++q) {
        const auto [m, mp] = pt.ordered[static_cast<std::size_t>(q)];
        const double gamma_mag = std::abs(r.dephasing_rate(m, mp));
        double transfer = std::abs(r(m, mp, mp, m));
        for (int k = 0; k < n; ++k) transfer = std::max(transfer, std::abs(r(mp, m, k, k)));
        if (gamma_mag <= 0.0) {
            worst_ratio = std::numeric_limits<double>::infinity();
        } else {
            worst_ratio = std::max(worst_ratio, transfer / gamma_mag);
        }
    }
    if (worst_ratio * regime_factor > 1.0) {
        std::ostringstream os;
        os << "high_t_correction: coherence transfer / dephasing ratio " << worst_ratio
           << " violates the regime bound 1/" << regime_factor;
        throw std::runtime_error(os.str());
    }

    const cxd half_i(0.0, 0.5);
    RealMatrix out = RealMatrix::Zero(n, n);
    for (int m = 0; m < n; ++m) {
        const int p = pt.pair_of_state[m];
        for (int k = 0; k < n; ++k) {
            if (k == m) continue;
            cxd t = 0.0;
            if (p >= 0) {
                const int mp = pt.partner_of_state[m];
                const double delta = 2.0 * std::abs(h(m, mp));
                const double bias = std::real(h(m, m) - h(mp, mp));
                const cxd gamma = r.dephasing_rate(m, mp);
                t += half_i * delta * r(m, mp, k, k) / (gamma + cxd(0.0, 1.0) * bias);
            }
            if (pt.pair_of_state[k] >= 0) {
                const int kp = pt.partner_of_state[k];
                const double delta = 2.0 * std::abs(h(k, kp));
                const double bias = std::real(h(k, k) - h(kp, kp));
                const cxd gamma = r.dephasing_rate(k, kp);
                t += half_i * delta * r(m, m, k, kp) / (gamma + cxd(0.0, 1.0) * bias);
            }
            out(m, k) = std::real(t + std::conj(t));
        }
    }
    return out;
}

EigenCorrection eigenbasis_correction(const redfield::RedfieldTensor& r,
                                      const RealVector& energies, const PairTable& pt,
                                      double lambda) {
    const int n = r.dim;
    const int nd = pt.num_doublets();
    EigenCorrection out;
    out.full = RealMatrix::Zero(n, n);
    out.ground_only = RealMatrix::Zero(n, n);
    if (nd == 0) return out;

    // Ground doublet: the one whose lower level sits lowest.
    int ground = 0;
    for (int d = 1; d < nd; ++d) {
        const int lo = pt.ordered[static_cast<std::size_t>(pt.rep_pair(d))].first;
        const int glo = pt.ordered[static_cast<std::size_t>(pt.rep_pair(ground))].first;
        if (energies(lo) < energies(glo)) ground = d;
    }

    for (int al = 0; al < n; ++al) {
        for (int be = 0; be < n; ++be) {
            if (be == al) continue;
            cxd total = 0.0;
            cxd ground_term = 0.0;
            for (int d = 0; d < nd; ++d) {
                const int q = pt.rep_pair(d);
                const auto [de, dep] = pt.ordered[static_cast<std::size_t>(q)];
                const double gamma = std::real(r.dephasing_rate(de, dep));
                const double omega = energies(de) - energies(dep);
                const cxd r_off = r(de, dep, dep, de);
                const double denom = (gamma - lambda) * (gamma - lambda) + omega * omega -
                                     std::norm(r_off);
                const cxd num = r_off * r(dep, de, be, be) +
                                r(de, dep, be, be) * cxd(gamma - lambda, -omega);
                const cxd term = r(al, al, de, dep) * num / denom;
                total += term;
                if (d == ground) ground_term = term;
            }
            out.full(al, be) = std::real(total + std::conj(total));
            out.ground_only(al, be) = std::real(ground_term + std::conj(ground_term));
        }
    }
    return out;
}

RealMatrix assemble_effective_generator(const RateSet& rates, const redfield::RedfieldTensor& r,
                                        const PairTable& pt) {
    const int n = r.dim;
    RealMatrix m = rates.transition + rates.correction;
    for (int p = 0; p < pt.num_pairs(); ++p) {
        const int row = pt.ordered[static_cast<std::size_t>(p)].first;
        for (int d = 0; d < pt.num_doublets(); ++d) {
            const int rep = pt.ordered[static_cast<std::size_t>(pt.rep_pair(d))].first;
            const int partner = pt.ordered[static_cast<std::size_t>(pt.rep_pair(d))].second;
            m(row, rep) += rates.tunneling(p, d);
            m(row, partner) -= rates.tunneling(p, d);
        }
    }
    const double scale = std::max(max_abs(m), 1e-300);
    for (int k = 0; k < n; ++k) {
        const double column_sum = m.col(k).sum();
        if (std::abs(column_sum) > 1e-10 * scale) {
            std::ostringstream os;
            os << "assemble_effective_generator: column " << k << " sums to " << column_sum
               << " (scale " << scale << "); population conservation violated";
            throw std::runtime_error(os.str());
        }
    }
    return m;
}

AmplitudeSet reconstruct_offdiagonals(const RealVector& diag_amplitudes, const SeriesTables& st,
                                      const PairTable& pt) {
    const int np = pt.num_pairs();
    AmplitudeSet out;
    out.offdiag = Vector::Zero(np);
    for (int p = 0; p < np; ++p) {
        cxd val = 0.0;
        for (int q = 0; q < np; ++q) {
            const auto [k, kp] = pt.ordered[static_cast<std::size_t>(q)];
            val += st.f(p, q) * (diag_amplitudes(k) - diag_amplitudes(kp));
        }
        for (Eigen::Index k = 0; k < diag_amplitudes.size(); ++k) {
            val += st.g(p, k) * diag_amplitudes(k);
        }
        out.offdiag(p) = val;
    }
    for (int p = 0; p < np; ++p) {
        out.conjugation_violation =
            std::max(out.conjugation_violation,
                     std::abs(out.offdiag(pt.conj_index(p)) - std::conj(out.offdiag(p))));
    }
    return out;
}

PopulationSlowMode slow_population_mode(const RealMatrix& m, double stationary_tol_factor) {
    Eigen::EigenSolver<RealMatrix> solver(m, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("slow_population_mode: eigensolver failed");
    }
    const Vector ev = solver.eigenvalues();
    double scale = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) scale = std::max(scale, std::abs(ev(i).real()));
    if (scale == 0.0) scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    const double stat_tol = stationary_tol_factor * scale;

    PopulationSlowMode mode;
    int best = -1;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev(i)) < stat_tol) {
            ++mode.stationary_count;
            continue;
        }
        const double re = std::abs(ev(i).real());
        if (best < 0 || re < std::abs(ev(best).real()) - 1e-12 * scale ||
            (std::abs(re - std::abs(ev(best).real())) <= 1e-12 * scale &&
             std::abs(ev(i).imag()) < std::abs(ev(best).imag()))) {
            best = static_cast<int>(i);
        }
    }
    if (best < 0) {
        throw std::runtime_error("slow_population_mode: no non-stationary eigenvalue");
    }
    mode.rate = std::abs(ev(best).real());
    mode.eigenvalue = ev(best);
    mode.eigenvector = solver.eigenvectors().col(best).real();
    double next = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev(i)) < stat_tol || i == best) continue;
        const double re = std::abs(ev(i).real());
        if (re > mode.rate * (1.0 + 1e-12)) next = std::min(next, re);
    }
    mode.gap_ratio = std::isfinite(next) && mode.rate > 0.0 ? next / mode.rate : 0.0;
    return mode;
}

PopulationSlowMode plain_secular_rate(const redfield::RedfieldTensor& r) {
    const int n = r.dim;
    RealMatrix m(n, n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) m(i, k) = r.population_rate(i, k);
    }
    return slow_population_mode(m);
}

namespace {

// Off-diagonal amplitudes generated by a (possibly complex) population mode.
Vector offdiagonals_of_mode(const Vector& diag, const Matrix& f, const Matrix& g,
                            const PairTable& pt) {
    const int np = pt.num_pairs();
    Vector out = Vector::Zero(np);
    for (int p = 0; p < np; ++p) {
        cxd val = 0.0;
        for (int q = 0; q < np; ++q) {
            const auto [k, kp] = pt.ordered[static_cast<std::size_t>(q)];
            val += f(p, q) * (diag(k) - diag(kp));
        }
        for (Eigen::Index k = 0; k < diag.size(); ++k) val += g(p, k) * diag(k);
        out(p) = val;
    }
    return out;
}

// One evaluation of the reduced system at a fixed slow-rate value.
struct ReducedStep {
    SeriesTables series;
    RateSet rates;
    RealMatrix gen;
    Vector eigenvalues;
    Matrix eigenvectors;
    double stationary_tol = 0.0;
};

ReducedStep evaluate_reduced(const redfield::RedfieldTensor& r, const Matrix& h,
                             const PairTable& pt, double lambda,
                             const SelfConsistentOptions& opt) {
    const ReductionCoefficients coeffs = compute_coefficients(r, h, pt, lambda);
    ReducedStep step;
    if (opt.zeroth_only) {
        step.series.f = Matrix(coeffs.c.asDiagonal());
        step.series.g = coeffs.d_pop;
        step.series.converged = true;
        step.rates = zeroth_order_rates(coeffs, r, h, pt);
    } else {
        step.series = compute_fg(coeffs, pt, opt.max_order, opt.term_tol);
        step.rates = compute_rates(step.series, r, h, pt);
    }
    step.gen = assemble_effective_generator(step.rates, r, pt);
    if (!step.gen.allFinite()) {
        throw std::runtime_error("solve_self_consistent: non-finite effective generator");
    }
    Eigen::EigenSolver<RealMatrix> solver(step.gen, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("solve_self_consistent: eigensolver failed");
    }
    step.eigenvalues = solver.eigenvalues();
    step.eigenvectors = solver.eigenvectors();
    double scale = 0.0;
    for (Eigen::Index i = 0; i < step.eigenvalues.size(); ++i) {
        scale = std::max(scale, std::abs(step.eigenvalues(i).real()));
    }
    if (scale == 0.0) scale = std::max(step.eigenvalues.cwiseAbs().maxCoeff(), 1e-300);
    step.stationary_tol = opt.stationary_tol_factor * scale;
    return step;
}

// Population overlap of a semi-secular vector (populations + intra-doublet
// coherences), optionally rotated to the observable frame first.
double semisecular_overlap(const Vector& diag, const Vector& off, const PairTable& pt,
                           const Matrix* to_observable) {
    if (to_observable == nullptr) {
        const double pops = diag.squaredNorm();
        const double total = pops + off.squaredNorm();
        return total > 0.0 ? pops / total : 0.0;
    }
    const int n = pt.dim;
    Matrix rho = Matrix::Zero(n, n);
    for (int m = 0; m < n; ++m) rho(m, m) = diag(m);
    for (int p = 0; p < pt.num_pairs(); ++p) {
        const auto [m, mp] = pt.ordered[static_cast<std::size_t>(p)];
        rho(m, mp) = off(p);
    }
    rho = (*to_observable) * rho * to_observable->adjoint();
    const double total = rho.squaredNorm();
    return total > 0.0 ? rho.diagonal().squaredNorm() / total : 0.0;
}

double mode_overlap(const ReducedStep& step, Eigen::Index index, const PairTable& pt,
                    const Matrix* to_observable) {
    const Vector diag = step.eigenvectors.col(index);
    const Vector off = offdiagonals_of_mode(diag, step.series.f, step.series.g, pt);
    return semisecular_overlap(diag, off, pt, to_observable);
}

// Branch tracking: the non-stationary eigenvalue whose |Re| is closest to the
// current iterate (ties to the smaller |Im|).
Eigen::Index track_branch(const ReducedStep& step, double lambda) {
    Eigen::Index best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < step.eigenvalues.size(); ++i) {
        if (std::abs(step.eigenvalues(i)) < step.stationary_tol) continue;
        const double dist = std::abs(std::abs(step.eigenvalues(i).real()) - lambda);
        if (dist < best_dist ||
            (dist == best_dist && best >= 0 &&
             std::abs(step.eigenvalues(i).imag()) < std::abs(step.eigenvalues(best).imag()))) {
            best = i;
            best_dist = dist;
        }
    }
    if (best < 0) {
        throw std::runtime_error("solve_self_consistent: no non-stationary eigenvalue");
    }
    return best;
}

}  // namespace

SelfConsistentSolution solve_self_consistent(const redfield::RedfieldTensor& r, const Matrix& h,
                                             const PairTable& pt,
                                             const SelfConsistentOptions& opt) {
    if (opt.damping <= 0.0 || opt.damping > 1.0) {
        throw std::invalid_argument("solve_self_consistent: damping must be in (0, 1]");
    }

    // Seeds: every non-stationary eigenvalue of the effective generator built
    // at lambda = 0. Each seed is iterated to its own fixed point; the
    // population-overlap filter runs where the reconstruction is consistent,
    // at convergence, and the smallest accepted fixed point wins.
    const ReducedStep step0 = evaluate_reduced(r, h, pt, 0.0, opt);
    std::vector<double> seeds;
    for (Eigen::Index i = 0; i < step0.eigenvalues.size(); ++i) {
        if (std::abs(step0.eigenvalues(i)) < step0.stationary_tol) continue;
        seeds.push_back(std::abs(step0.eigenvalues(i).real()));
    }
    if (seeds.empty()) {
        throw std::runtime_error("solve_self_consistent: no non-stationary eigenvalue at lambda=0");
    }
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end(),
                            [](double a, double b) {
                                return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
                            }),
                seeds.end());

    bool have_best = false;
    SelfConsistentSolution best;
    std::vector<std::string> rejected;
    std::vector<double> converged_values;

    for (double seed : seeds) {
        const bool duplicate =
            std::any_of(converged_values.begin(), converged_values.end(), [seed](double v) {
                return std::abs(v - seed) <= 1e-6 * std::max(std::abs(v), std::abs(seed));
            });
        if (duplicate) continue;

        SelfConsistentSolution sol;
        sol.history = { 0.0, seed };
        double lambda = seed;
        bool converged = false;
        Eigen::Index tracked = -1;
        ReducedStep step;
        try {
            for (int iter = 1; iter <= opt.max_iter; ++iter) {
                step = evaluate_reduced(r, h, pt, lambda, opt);
                tracked = track_branch(step, lambda);
                const double rate = std::abs(step.eigenvalues(tracked).real());
                const double next = (1.0 - opt.damping) * lambda + opt.damping * rate;
                const double residual = std::abs(next - lambda) / std::max(std::abs(next), 1e-300);
                sol.iterations = iter;
                sol.residual = residual;
                sol.history.push_back(next);
                sol.lambda = next;
                if (residual < opt.tol || (next == 0.0 && lambda == 0.0)) {
                    converged = true;
                    break;
                }
                lambda = next;
            }
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "seed " << seed << ": " << e.what();
            rejected.push_back(os.str());
            continue;
        }
        if (!converged) {
            // Distinguish a stagnant period-2 cycle from plain non-convergence.
            std::ostringstream os;
            const std::size_t hist = sol.history.size();
            const double last = sol.history[hist - 1];
            const double prev2 = sol.history[hist - 3];
            if (hist >= 4 &&
                std::abs(last - prev2) < 1e-6 * std::max(std::abs(last), 1e-300)) {
                os << "seed " << seed << ": period-2 oscillation between "
                   << sol.history[hist - 2] << " and " << last << "; retry with damping < 1";
            } else {
                os << "seed " << seed << ": no convergence after " << opt.max_iter
                   << " iterations (last residual " << sol.residual << ")";
            }
            rejected.push_back(os.str());
            continue;
        }
        converged_values.push_back(sol.lambda);
        const double overlap = mode_overlap(step, tracked, pt, opt.to_observable);
        if (overlap < opt.overlap_threshold) {
            std::ostringstream os;
            os << "seed " << seed << ": fixed point " << sol.lambda << " has population overlap "
               << overlap << " below " << opt.overlap_threshold;
            rejected.push_back(os.str());
            continue;
        }
        sol.population_overlap = overlap;
        sol.effective_generator = step.gen;
        sol.rates = step.rates;
        sol.series = step.series;
        double next_rate = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < step.eigenvalues.size(); ++i) {
            if (std::abs(step.eigenvalues(i)) < step.stationary_tol || i == tracked) continue;
            const double re = std::abs(step.eigenvalues(i).real());
            if (re > sol.lambda * (1.0 + 1e-12)) next_rate = std::min(next_rate, re);
        }
        sol.gap_ratio = std::isfinite(next_rate) && sol.lambda > 0.0 ? next_rate / sol.lambda : 0.0;
        if (!have_best || sol.lambda < best.lambda * (1.0 - 1e-12)) {
            best = std::move(sol);
            have_best = true;
        }
    }

    if (!have_best) {
        std::ostringstream os;
        os << "solve_self_consistent: no population-dominant fixed point;";
        for (const auto& reason : rejected) os << "\n  " << reason;
        throw std::runtime_error(os.str());
    }
    return best;
}

SemiSecularResult solve_semisecular(const redfield::RedfieldTensor& r, const Matrix& h,
                                    const PairTable& pt, const SemiSecularOptions& opt) {
    const int n = r.dim;
    const redfield::EffectiveGenerator gen = redfield::build_generator(r, h);
    std::vector<Eigen::Index> kept;
    kept.reserve(static_cast<std::size_t>(n) + pt.ordered.size());
    for (int m = 0; m < n; ++m) kept.push_back(flat_index(m, m, n));
    for (const auto& [m, mp] : pt.ordered) kept.push_back(flat_index(m, mp, n));

    const auto dim = static_cast<Eigen::Index>(kept.size());
    Matrix reduced(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) reduced(i, j) = gen.matrix(kept[i], kept[j]);
    }

    Eigen::ComplexEigenSolver<Matrix> solver(reduced, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("solve_semisecular: eigensolver failed");
    }
    const Vector& ev = solver.eigenvalues();
    double scale = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) scale = std::max(scale, std::abs(ev(i).real()));
    if (scale == 0.0) scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    const double stat_tol = 1e-10 * scale;

    SemiSecularResult result;
    result.eigenvalues = ev;
    int best = -1;
    double best_overlap = 0.0;
    double best_unfiltered = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev(i)) < stat_tol) continue;
        const double re = std::abs(ev(i).real());
        best_unfiltered = std::min(best_unfiltered, re);
        const Vector v = solver.eigenvectors().col(i);
        const double overlap =
            semisecular_overlap(v.head(n), v.tail(pt.num_pairs()), pt, opt.to_observable);
        if (overlap < opt.overlap_threshold) continue;
        if (best < 0 || re < std::abs(ev(best).real()) - 1e-12 * scale ||
            (std::abs(re - std::abs(ev(best).real())) <= 1e-12 * scale && overlap > best_overlap)) {
            best = static_cast<int>(i);
            best_overlap = overlap;
        }
    }
    if (best < 0) {
        std::ostringstream os;
        os << "solve_semisecular: no mode with population overlap >= " << opt.overlap_threshold
           << "; smallest unfiltered |Re| = " << best_unfiltered;
        throw std::runtime_error(os.str());
    }
    result.lambda = std::abs(ev(best).real());
    result.eigenvalue = ev(best);
    result.population_overlap = best_overlap;
    double next = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev(i)) < stat_tol) continue;
        const double re = std::abs(ev(i).real());
        if (re > result.lambda * (1.0 + 1e-12)) next = std::min(next, re);
    }
    result.gap_ratio = std::isfinite(next) && result.lambda > 0.0 ? next / result.lambda : 0.0;
    return result;
}

}  // namespace spinrelax::reduction
