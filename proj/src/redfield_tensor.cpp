// redfield_tensor.cpp

#include "spinrelax/redfield_tensor.hpp"

#include "spinrelax/kernels.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace spinrelax::redfield {

const char* basis_name(BasisTag tag) noexcept {
    switch (tag) {
        case BasisTag::eigen: return "eigen";
        case BasisTag::localized: return "localized";
        case BasisTag::custom: return "custom";
    }
    return "unknown";
}

SemanticRates semantic_rates(const RedfieldTensor& r) {
    const int n = r.dim;
    SemanticRates out;
    out.population = RealMatrix::Zero(n, n);
    out.dephasing_re = RealMatrix::Zero(n, n);
    out.dephasing_im = RealMatrix::Zero(n, n);
    for (int m = 0; m < n; ++m) {
        for (int k = 0; k < n; ++k) {
            out.population(m, k) = r.population_rate(m, k);
            const cxd g = r.dephasing_rate(m, k);
            out.dephasing_re(m, k) = g.real();
            out.dephasing_im(m, k) = g.imag();
        }
    }
    double rest = 0.0;
    for (int m = 0; m < n; ++m) {
        for (int nn = 0; nn < n; ++nn) {
            for (int k = 0; k < n; ++k) {
                for (int l = 0; l < n; ++l) {
                    const bool population = (m == nn && k == l);
                    const bool dephasing = (m == k && nn == l);
                    if (population || dephasing) continue;
                    rest = std::max(rest, std::abs(r(m, nn, k, l)));
                }
            }
        }
    }
    out.max_coherence_transfer = rest;
    return out;
}

RedfieldTensor build_redfield_eigenbasis(const spin::EigenSystem& es, const bath::BathModel& bath,
                                         double temperature) {
    if (temperature <= 0.0) {
        throw std::invalid_argument("build_redfield_eigenbasis: temperature must be > 0");
    }
    const int n = es.dim;
    RedfieldTensor r;
    r.dim = n;
    r.basis = BasisTag::eigen;
    r.elements = Matrix::Zero(n * n, n * n);

    for (const auto& channel : bath.channels) {
        if (channel.coupling.rows() != n || channel.coupling.cols() != n) {
            throw std::invalid_argument("build_redfield_eigenbasis: coupling dimension mismatch");
        }
        if (!is_hermitian(channel.coupling, 1e-12)) {
            throw std::invalid_argument("build_redfield_eigenbasis: coupling is not Hermitian");
        }
        const auto spectrum = bath::make_spectrum(channel, temperature);
        const Matrix a = es.vectors.adjoint() * channel.coupling * es.vectors;

        // s(i, j) = S(eps_i - eps_j): weight of a transition handing the bath
        // energy eps_i - eps_j.
        RealMatrix s(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) s(i, j) = spectrum(es.energies(i) - es.energies(j));
        }

        // Loss contraction: m1(a, a') = sum_g A_ag A_ga' s(a', g).
        Matrix m1 = Matrix::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                cxd acc = 0.0;
                for (int g = 0; g < n; ++g) acc += a(i, g) * a(g, j) * s(j, g);
                m1(i, j) = acc;
            }
        }

        for (int al = 0; al < n; ++al) {
            for (int be = 0; be < n; ++be) {
                const Eigen::Index row = flat_index(al, be, n);
                for (int alp = 0; alp < n; ++alp) {
                    for (int bep = 0; bep < n; ++bep) {
                        cxd val = 0.0;
                        if (be == bep) val -= m1(al, alp);
                        if (al == alp) val -= std::conj(m1(be, bep));
                        val += a(al, alp) * a(bep, be) * (s(bep, be) + s(alp, al));
                        r.elements(row, flat_index(alp, bep, n)) += 0.5 * val;
                    }
                }
            }
        }
    }
    return r;
}

RedfieldTensor transform_tensor(const RedfieldTensor& r, const Matrix& w, BasisTag new_tag) {
    const int n = r.dim;
    if (w.rows() != n || w.cols() != n) {
        throw std::invalid_argument("transform_tensor: dimension mismatch");
    }
    if (unitarity_violation(w) > 1e-10) {
        throw std::invalid_argument("transform_tensor: matrix is not unitary to 1e-10");
    }
    // Superoperator congruence: R_new = K R K^dagger, K = kron(W, conj(W))
    // under the row-major (m,n) flattening.
    const Eigen::Index nn = static_cast<Eigen::Index>(n) * n;
    Matrix kron(nn, nn);
    for (int m = 0; m < n; ++m) {
        for (int mn = 0; mn < n; ++mn) {
            const Eigen::Index row = flat_index(m, mn, n);
            for (int al = 0; al < n; ++al) {
                for (int be = 0; be < n; ++be) {
                    kron(row, flat_index(al, be, n)) = w(m, al) * std::conj(w(mn, be));
                }
            }
        }
    }
    Matrix tmp(nn, nn);
    RedfieldTensor out;
    out.dim = n;
    out.basis = new_tag;
    out.elements.resize(nn, nn);
    const auto sz = static_cast<std::size_t>(nn);
    kernels::zgemm_nn(sz, sz, sz, kron.data(), sz, r.elements.data(), sz, tmp.data(), sz);
    kernels::zgemm_nh(sz, sz, sz, tmp.data(), sz, kron.data(), sz, out.elements.data(), sz);
    return out;
}

EffectiveGenerator build_generator(const RedfieldTensor& r, const Matrix& h) {
    const int n = r.dim;
    if (h.rows() != n || h.cols() != n) {
        throw std::invalid_argument("build_generator: dimension mismatch");
    }
    EffectiveGenerator g;
    g.dim = n;
    g.basis = r.basis;
    g.matrix = r.elements;
    const cxd iu(0.0, 1.0);
    for (int m = 0; m < n; ++m) {
        for (int nn = 0; nn < n; ++nn) {
            const Eigen::Index row = flat_index(m, nn, n);
            // delta_mk term: + i H(l, n) on column (m, l)
            for (int l = 0; l < n; ++l) {
                g.matrix(row, flat_index(m, l, n)) += iu * h(l, nn);
            }
            // delta_ln term: - i H(m, k) on column (k, n)
            for (int k = 0; k < n; ++k) {
                g.matrix(row, flat_index(k, nn, n)) -= iu * h(m, k);
            }
        }
    }
    return g;
}

TensorPropertyReport verify_tensor_properties(const RedfieldTensor& r, double tol) {
    const int n = r.dim;
    const double scale = std::max(max_abs(r.elements), 1e-300);
    double conj_violation = 0.0;
    for (int m = 0; m < n; ++m) {
        for (int nn = 0; nn < n; ++nn) {
            for (int k = 0; k < n; ++k) {
                for (int l = 0; l < n; ++l) {
                    const cxd diff = std::conj(r(m, nn, k, l)) - r(nn, m, l, k);
                    conj_violation = std::max(conj_violation, std::abs(diff));
                }
            }
        }
    }
    double trace_violation = 0.0;
    for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
            cxd acc = 0.0;
            for (int m = 0; m < n; ++m) acc += r(m, m, k, l);
            trace_violation = std::max(trace_violation, std::abs(acc));
        }
    }
    TensorPropertyReport report;
    report.conjugation_violation = conj_violation / scale;
    report.trace_violation = trace_violation / scale;
    report.tolerance = tol;
    report.pass = report.conjugation_violation <= tol && report.trace_violation <= tol;
    return report;
}

void dump_tensor(const RedfieldTensor& r, std::ostream& out) {
    const Eigen::Index nn = static_cast<Eigen::Index>(r.dim) * r.dim;
    char buf[64];
    for (Eigen::Index row = 0; row < nn; ++row) {
        for (Eigen::Index col = 0; col < nn; ++col) {
            const cxd v = r.elements(row, col);
            std::snprintf(buf, sizeof buf, "%.17g %.17g", v.real(), v.imag());
            out << buf;
            out << (col + 1 == nn ? '\n' : ' ');
        }
    }
}

}  // namespace spinrelax::redfield
