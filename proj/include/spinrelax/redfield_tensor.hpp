// redfield_tensor.hpp - rank-4 relaxation tensor R_{mn,kl}, basis transforms,
// the full generator R' and semantic rate views.
#pragma once

#include "spinrelax/bath.hpp"
#include "spinrelax/spin_model.hpp"
#include "spinrelax/types.hpp"

#include <iosfwd>

namespace spinrelax::redfield {

enum class BasisTag { eigen, localized, custom };

const char* basis_name(BasisTag tag) noexcept;

// Stored as an N^2 x N^2 complex matrix; row (m,n) and column (k,l) use the
// shared flattening (m,n) -> m*N + n.
struct RedfieldTensor {
    int dim = 0;
    BasisTag basis = BasisTag::eigen;
    Matrix elements;

    cxd operator()(int m, int n, int k, int l) const {
        return elements(flat_index(m, n, dim), flat_index(k, l, dim));
    }
    // Gamma_mn = R_mm,nn: population transfer rate n -> m (real by the
    // conjugation symmetry; the real part is returned).
    double population_rate(int m, int n) const {
        return std::real((*this)(m, m, n, n));
    }
    // gamma_mn = -R_mn,mn (complex; gamma' = Re damps, gamma'' = Im shifts).
    cxd dephasing_rate(int m, int n) const { return -(*this)(m, n, m, n); }
};

// Population / dephasing / coherence-transfer views of a tensor.
struct SemanticRates {
    RealMatrix population;       // Gamma_mn (diagonal holds R_mm,mm)
    RealMatrix dephasing_re;     // gamma'_mn
    RealMatrix dephasing_im;     // gamma''_mn
    double max_coherence_transfer = 0.0;  // largest remaining element
};
SemanticRates semantic_rates(const RedfieldTensor& r);

// Assemble the one-phonon tensor in the eigenbasis. Every bath transition
// delta-function is realized as a thermal spectrum evaluation at the matching
// Bohr frequency; both branches of the gain term are kept.
RedfieldTensor build_redfield_eigenbasis(const spin::EigenSystem& es, const bath::BathModel& bath,
                                         double temperature);

// Congruence R_mn,kl = sum <m|a><b|n><g|k><l|d> R_ab,gd with w(m,a) = <m|a>.
RedfieldTensor transform_tensor(const RedfieldTensor& r, const Matrix& w, BasisTag new_tag);

// R'_{mn,kl} = R_{mn,kl} + i (delta_mk H_ln - H_mk delta_ln).
struct EffectiveGenerator {
    int dim = 0;
    BasisTag basis = BasisTag::eigen;
    Matrix matrix;  // N^2 x N^2
};
EffectiveGenerator build_generator(const RedfieldTensor& r, const Matrix& h);

struct TensorPropertyReport {
    double conjugation_violation = 0.0;  // max |R*_mn,kl - R_nm,lk| / max|R|
    double trace_violation = 0.0;        // max |sum_m R_mm,kl| / max|R|
    double tolerance = 0.0;
    bool pass = false;
};
TensorPropertyReport verify_tensor_properties(const RedfieldTensor& r, double tol = 1e-12);

// Row-major text dump, "re im" pairs, 17 significant digits.
void dump_tensor(const RedfieldTensor& r, std::ostream& out);

}  // namespace spinrelax::redfield
