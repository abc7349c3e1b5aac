// bath.hpp - phonon bath: spectral densities, Bose factors and the one-sided
// thermal spectrum S(omega) entering the relaxation tensor.
#pragma once

#include "spinrelax/types.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace spinrelax::bath {

enum class SpectralForm { debye_cubic, ohmic, tabulated };

struct SpectralDensity {
    SpectralForm form = SpectralForm::debye_cubic;
    double prefactor = 1.0;  // alpha, sets the overall rate scale
    double cutoff = 1.0;     // exponential cutoff omega_c
    std::vector<std::pair<double, double>> table;  // (omega, J) for tabulated

    // J(omega) for omega >= 0; tabulated densities interpolate linearly and
    // vanish outside their range.
    double value(double omega) const;
    // dJ/domega at 0+, fixes the omega -> 0 limit of the thermal spectrum.
    double zero_frequency_slope() const;

    static SpectralDensity debye(double alpha, double cutoff);
    static SpectralDensity ohmic(double alpha, double cutoff);
    static SpectralDensity from_table(std::vector<std::pair<double, double>> table);
    // Two-column text (omega, J) with '#' comments.
    static SpectralDensity from_table_stream(std::istream& in);
    static SpectralDensity from_table_file(const std::string& path);
};

// n(omega, T) = 1/(exp(omega/T) - 1); n = 0 at T = 0. Requires omega > 0.
double bose_occupation(double omega, double temperature);

// One-sided thermal spectrum: omega is the energy handed to the bath.
//   S(omega > 0) = J(omega) (n + 1)      (emission into the bath)
//   S(omega < 0) = J(-omega) n(-omega)   (absorption from the bath)
//   S(0)         = lim omega -> 0+       (T * dJ/domega|_0)
// Detailed balance S(-omega) = exp(-omega/T) S(omega) holds by construction.
double bath_spectrum(const SpectralDensity& j, double omega, double temperature);

struct CouplingChannel {
    Matrix coupling;        // Hermitian N x N shape, product basis
    double strength = 1.0;  // scalar coupling constant
    SpectralDensity density;
};

// Independent channels; their tensors add incoherently.
struct BathModel {
    std::vector<CouplingChannel> channels;
};

// Channel spectrum bound at a temperature: strength^2 * S(omega).
struct BathSpectrum {
    const SpectralDensity* density = nullptr;
    double strength_sq = 1.0;
    double temperature = 0.0;
    double operator()(double omega) const {
        return strength_sq * bath_spectrum(*density, omega, temperature);
    }
};

BathSpectrum make_spectrum(const CouplingChannel& ch, double temperature);

}  // namespace spinrelax::bath
