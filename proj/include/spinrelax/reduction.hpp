// reduction.hpp - reduction of the semi-secular master equation to a closed
// population-space rate equation: intra-doublet amplitude coefficients, their
// nested series, tunneling/correction rates, the effective generator and the
// self-consistent solve for the slow rate. The semi-secular solver doubles as
// the fallback when the coefficient denominators turn singular.
#pragma once

#include "spinrelax/redfield_tensor.hpp"
#include "spinrelax/spin_model.hpp"
#include "spinrelax/types.hpp"

#include <utility>
#include <vector>

namespace spinrelax::reduction {

// Ordered intra-doublet coherences: each doublet d contributes (lower, upper)
// at slot 2d and (upper, lower) at slot 2d+1, so the conjugate slot is p^1.
struct PairTable {
    int dim = 0;
    std::vector<std::pair<int, int>> ordered;
    std::vector<int> pair_of_state;     // state -> slot whose .first is the state; -1
    std::vector<int> partner_of_state;  // -1 for singlets
    std::vector<int> doublet_of_pair;

    int conj_index(int p) const { return p ^ 1; }
    int rep_pair(int d) const { return 2 * d; }
    int num_pairs() const { return static_cast<int>(ordered.size()); }
    int num_doublets() const { return static_cast<int>(ordered.size()) / 2; }

    static PairTable build(const spin::DoubletStructure& ds);
};

// C_mm' for one ordered pair at a given slow-rate value.
cxd compute_C(const redfield::RedfieldTensor& r, const Matrix& h, int m, int mp, double lambda);

// D_mm',kl for one ordered pair and one retained column (k,l).
cxd compute_D(const redfield::RedfieldTensor& r, const Matrix& h, int m, int mp, int k, int l,
              double lambda);

struct ReductionCoefficients {
    double lambda = 0.0;
    Vector c;      // per ordered pair
    Matrix d_pop;  // pairs x N: columns (k, k)
    Matrix d_coh;  // pairs x pairs: columns (k, k'); own-doublet columns zero
};
ReductionCoefficients compute_coefficients(const redfield::RedfieldTensor& r, const Matrix& h,
                                           const PairTable& pt, double lambda);

struct SeriesTables {
    Matrix f;  // pairs x pairs
    Matrix g;  // pairs x N
    int order = 0;
    std::vector<double> term_norms;  // one entry per retained order
    double truncation_bound = 0.0;   // last term norm relative to order zero
    bool converged = false;
};
// Partial sums of the nested coefficient chains; rejects when term norms grow
// between consecutive orders.
SeriesTables compute_fg(const ReductionCoefficients& coeffs, const PairTable& pt, int max_order,
                        double term_tol);

struct RateSet {
    // tunneling(p, d): population-difference transfer rate from doublet d
    // (representative state column) into the first state of ordered pair p.
    RealMatrix tunneling;
    RealMatrix transition;  // Gamma_mk = Re R_mm,kk, diagonal included
    RealMatrix correction;  // Gamma^corr_mk, diagonal included
    bool zeroth_order = false;
    double max_imag_residue = 0.0;
    // Gamma_m^m' for the first state of pair p (general tunneling rate).
    double tunneling_into_partner(const PairTable& pt, int p) const;
};

RateSet compute_rates(const SeriesTables& st, const redfield::RedfieldTensor& r, const Matrix& h,
                      const PairTable& pt);
RateSet zeroth_order_rates(const ReductionCoefficients& coeffs, const redfield::RedfieldTensor& r,
                           const Matrix& h, const PairTable& pt);

// Lorentzian-in-bias incoherent tunneling rate.
double incoherent_rate(double delta, double bias, double gamma_re, double gamma_im);

// High-temperature limit of the zeroth-order correction; the regime premise
// (coherence transfer much smaller than dephasing) is checked, not assumed.
RealMatrix high_t_correction(const redfield::RedfieldTensor& r, const Matrix& h,
                             const PairTable& pt, double regime_factor = 10.0);

struct EigenCorrection {
    RealMatrix full;         // sum over all doublets
    RealMatrix ground_only;  // ground-doublet term alone
};
// Zeroth-order correction in the eigenbasis (diagonal H): the doublet sum and
// its ground-dominant truncation.
EigenCorrection eigenbasis_correction(const redfield::RedfieldTensor& r,
                                      const RealVector& energies, const PairTable& pt,
                                      double lambda);

// Population-space rate matrix of the reduced equation; columns sum to zero.
RealMatrix assemble_effective_generator(const RateSet& rates, const redfield::RedfieldTensor& r,
                                        const PairTable& pt);

struct AmplitudeSet {
    Vector offdiag;  // per ordered pair
    double conjugation_violation = 0.0;
};
AmplitudeSet reconstruct_offdiagonals(const RealVector& diag_amplitudes, const SeriesTables& st,
                                      const PairTable& pt);

// Slow relaxation eigenvalue of a population rate matrix.
struct PopulationSlowMode {
    double rate = 0.0;
    cxd eigenvalue;
    double gap_ratio = 0.0;
    int stationary_count = 0;
    RealVector eigenvector;  // real part of the selected mode
};
PopulationSlowMode slow_population_mode(const RealMatrix& m, double stationary_tol_factor = 1e-10);

// Plain secular rate: populations-only block of the tensor.
PopulationSlowMode plain_secular_rate(const redfield::RedfieldTensor& r);

struct SelfConsistentOptions {
    int max_order = 8;
    double term_tol = 1e-10;
    bool zeroth_only = false;
    double tol = 1e-10;
    int max_iter = 50;
    double damping = 1.0;
    double stationary_tol_factor = 1e-10;
    // Candidate eigenvalues of the effective generator are filtered by the
    // population overlap of the reconstructed semi-secular eigenvector
    // (populations plus the off-diagonal amplitudes they generate), measured
    // in the observable frame when `to_observable` is set.
    double overlap_threshold = 0.5;
    const Matrix* to_observable = nullptr;
};

struct SelfConsistentSolution {
    double lambda = 0.0;
    int iterations = 0;
    double residual = 0.0;
    RealMatrix effective_generator;
    std::vector<double> history;
    RateSet rates;
    SeriesTables series;
    double gap_ratio = 0.0;
    double population_overlap = 0.0;  // of the reconstructed slow mode
};

// Fixed-point iteration: lambda_0 = 0, lambda_{n+1} = slow eigenvalue of the
// effective generator assembled at lambda_n (optionally damped).
SelfConsistentSolution solve_self_consistent(const redfield::RedfieldTensor& r, const Matrix& h,
                                             const PairTable& pt,
                                             const SelfConsistentOptions& opt = {});

struct SemiSecularOptions {
    double overlap_threshold = 0.5;
    double stationary_tol_factor = 1e-10;
    const Matrix* to_observable = nullptr;  // frame for the population filter
};

struct SemiSecularResult {
    double lambda = 0.0;
    cxd eigenvalue;
    Vector eigenvalues;  // spectrum of the reduced generator
    double population_overlap = 0.0;
    double gap_ratio = 0.0;
};

// Direct eigensolve of the generator restricted to populations plus
// intra-doublet coherences.
SemiSecularResult solve_semisecular(const redfield::RedfieldTensor& r, const Matrix& h,
                                    const PairTable& pt, const SemiSecularOptions& opt = {});

}  // namespace spinrelax::reduction
