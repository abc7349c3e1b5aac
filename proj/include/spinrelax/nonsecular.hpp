// nonsecular.hpp - exact reference solver: eigendecomposition of the full
// generator, stationary state, slow-mode extraction and trajectory
// propagation.
#pragma once

#include "spinrelax/redfield_tensor.hpp"
#include "spinrelax/types.hpp"

#include <vector>

namespace spinrelax::solver {

struct SpectrumOptions {
    double stationary_tol_factor = 1e-10;  // times max |Re lambda|
};

struct GeneratorSpectrum {
    int dim = 0;  // N (state-space dimension; the generator is N^2 x N^2)
    Vector eigenvalues;  // sorted by |Re| ascending (ties: Re, then Im)
    Matrix right;        // columns, unit norm
    Matrix left;         // rows, scaled so left.row(i) * right.col(j) = delta_ij
    int stationary_index = -1;
    int stationary_count = 0;
    double stationary_tol = 0.0;
    double max_real_part = 0.0;        // stability diagnostic (should be <= ~0)
    double conjugation_closure = 0.0;  // distance of the set from conjugation symmetry
};

GeneratorSpectrum spectrum(const redfield::EffectiveGenerator& g, const SpectrumOptions& opt = {});

struct SlowMode {
    double rate = 0.0;  // |Re| of the selected eigenvalue
    cxd eigenvalue;
    int index = -1;
    Vector eigenvector;
    double population_overlap = 0.0;
    double gap_ratio = 0.0;  // next non-stationary |Re| over the selected one
};

// Smallest-|Re| non-stationary mode whose squared eigenvector amplitude on
// the diagonal (population) components reaches the threshold. The population
// sector is frame-dependent; to keep the selection invariant across working
// bases, `to_observable` rotates candidate modes into the frame whose
// populations carry the observable (identity when null).
SlowMode slow_rate(const GeneratorSpectrum& sp, double overlap_threshold = 0.5,
                   const Matrix* to_observable = nullptr);

// Unique stationary eigenvector reshaped to a density matrix (Hermitized,
// unit trace). Rejects degenerate stationary sectors.
Matrix stationary_state(const GeneratorSpectrum& sp);

struct Trajectory {
    std::vector<double> times;
    std::vector<Matrix> states;
    double max_trace_drift = 0.0;
    double max_hermiticity_drift = 0.0;
};

// rho(t) by spectral decomposition of the generator. Rejects defective
// generators via the eigenvector-matrix condition estimate.
Trajectory propagate(const Matrix& rho0, const redfield::EffectiveGenerator& g,
                     const std::vector<double>& times, double condition_bound = 1e12);

}  // namespace spinrelax::solver
