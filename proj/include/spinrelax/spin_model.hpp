// spin_model.hpp - giant-spin Hamiltonian, eigensystem, doublet pairing and
// the localized (well) basis built from zero-field doublet eigenstates.
#pragma once

#include "spinrelax/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace spinrelax::spin {

struct SpinOperators {
    int dim = 0;
    Matrix sx, sy, sz;
};

// Standard angular-momentum matrices in the |S, m_S> product basis with m_S
// descending (row 0 is m_S = +S).
SpinOperators build_spin_operators(double s);

// Extra anisotropy term: product of spin operators given as a word over
// {x, y, z, p, m} ("zz" is Sz^2, "xz" is Sx*Sz, 'p'/'m' are the ladder
// operators), times a coefficient. Non-Hermitian words are Hermitized as
// (P + P^dagger)/2.
struct PolynomialTerm {
    std::string axes;
    double coefficient = 0.0;
};

struct SpinParameters {
    double s = 0.5;                                   // spin quantum number
    double axial = 0.0;                               // D
    double rhombic = 0.0;                             // E
    Eigen::Vector3d field = Eigen::Vector3d::Zero();  // B, energy units per g*mu_B
    double g_factor = 2.0;
    std::vector<PolynomialTerm> extra_terms;
};

// Hard validation errors throw; soft issues (|E| > |D|/3) come back as
// warning strings.
std::vector<std::string> validate(const SpinParameters& p);

// H = D*Sz^2 + E*(Sx^2 - Sy^2) + g*mu_B*B.S + extra terms (mu_B = 1).
Matrix build_hamiltonian(const SpinParameters& p);

// Build an operator from a '+'-separated sum of coefficient*axes-word terms,
// e.g. "x", "0.5*xz+0.5*zx". Used for bath coupling operators and extras.
Matrix operator_from_expression(const std::string& expr, const SpinOperators& ops);

struct EigenSystem {
    int dim = 0;
    RealVector energies;  // ascending
    Matrix vectors;       // columns; deterministic gauge (see diagonalize)
};

// Hermitian eigendecomposition with a deterministic gauge: inside degenerate
// clusters the basis is rebuilt from projections of product states ordered by
// |m_S| descending (ties: lower row index), and every column's largest-modulus
// component is rotated to be real positive.
EigenSystem diagonalize(const Matrix& h);

struct DoubletStructure {
    std::vector<std::array<int, 2>> pairs;  // (lower, upper) state indices
    std::vector<int> singlets;
    std::vector<int> partner;     // per state; -1 for singlets
    std::vector<int> doublet_of;  // per state; -1 for singlets
    RealVector energies;          // copy of the paired spectrum

    int dim() const { return static_cast<int>(partner.size()); }
    int num_doublets() const { return static_cast<int>(pairs.size()); }
    bool is_paired(int state) const { return partner[state] >= 0; }
    // Mean-energy gap between two groups (doublet centers / singlet levels).
    double doublet_gap(int d1, int d2) const;
    // Smallest gap between adjacent groups; the scale doublet splittings must
    // stay below.
    double min_inter_group_gap() const;
};

// Greedy pairing of adjacent near-degenerate levels. An adjacent gap g_i
// qualifies when g_i < threshold * min(neighbour gaps). Three mutually
// near-degenerate levels are rejected as ambiguous.
DoubletStructure pair_doublets(const EigenSystem& es, double threshold);

struct LocalizedBasis {
    Matrix vectors;  // columns, expressed in the product basis
    DoubletStructure structure;
};

// |m> = (|+> - |->)/sqrt(2), |m'> = (|+> + |->)/sqrt(2) from the zero-field
// doublet eigenstates (|+> the upper level). Within each pair the column with
// the larger <Sz> comes first; singlet columns are passed through.
LocalizedBasis build_localized_basis(const EigenSystem& zero_field, const DoubletStructure& ds);

struct DoubletParameters {
    std::vector<double> bias;       // W per doublet
    std::vector<double> splitting;  // Delta per doublet, >= 0
};

// W = <m|H|m> - <m'|H|m'>, Delta = 2|<m|H|m'>|; H given in the product basis.
DoubletParameters extract_doublet_params(const Matrix& h, const LocalizedBasis& lb);

}  // namespace spinrelax::spin
