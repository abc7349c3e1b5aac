// config.hpp - flat key-value run configuration: parsing, validation,
// defaults and a canonical re-parseable echo.
#pragma once

#include "spinrelax/bath.hpp"
#include "spinrelax/spin_model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace spinrelax::cli {

struct ChannelConfig {
    std::string name;
    std::string op = "x";  // '+'-separated coefficient*axes-word terms
    double strength = 1.0;
    std::string density = "debye_cubic";  // debye_cubic | ohmic | tabulated
    double alpha = 1e-3;
    double cutoff = 10.0;
    std::string table;  // path, tabulated only
};

struct RunConfig {
    // [spin]
    double s = 1.0;
    double axial = -1.0;
    double rhombic = 0.0;
    double g_factor = 2.0;
    Eigen::Vector3d field_direction = Eigen::Vector3d(0.0, 0.0, 1.0);
    std::vector<spin::PolynomialTerm> extra_terms;
    // [bath]
    std::vector<ChannelConfig> channels;
    // [grid] temperatures stored as k_B*T in energy units, strictly increasing
    std::vector<double> temperatures;
    std::vector<double> fields;  // scalar magnitudes along field_direction
    // [run]
    std::string basis = "localized";  // localized | eigen | both
    std::vector<std::string> methods = { "nonsecular" };
    std::string series_order = "adaptive";  // adaptive | non-negative integer
    // [tolerances]
    double pairing_threshold = 0.1;
    double overlap_threshold = 0.5;
    double self_consistency_tol = 1e-10;
    int max_iterations = 50;
    double damping = 1.0;
    int max_series_order = 8;
    double series_term_tol = 1e-10;
    // [units]
    std::string energy_unit = "cm-1";  // cm-1 | meV | K | unitless
    std::string temperature_unit = "kelvin";  // kelvin | energy (echo is canonical: energy)
    std::string rate_output = "per_energy_unit";  // per_energy_unit | per_second

    std::vector<std::string> warnings;  // soft validation issues

    spin::SpinParameters spin_parameters(double field_value) const;
    bath::BathModel bath_model(const spin::SpinOperators& ops) const;
    // Rate conversion factor applied at emission time.
    double rate_scale() const;
};

// Boltzmann constant in the given energy unit per kelvin.
double boltzmann_constant(const std::string& energy_unit);

RunConfig load_config(std::istream& in, bool strict = true);
RunConfig load_config_file(const std::string& path, bool strict = true);

// Canonical text form; parsing it reproduces the same configuration
// (temperatures echoed in energy units).
std::string echo_config(const RunConfig& cfg);

}  // namespace spinrelax::cli
