// sweep.hpp - grid orchestration over (temperature, field) points, method
// comparison and deterministic tabular output.
#pragma once

#include "spinrelax/config.hpp"
#include "spinrelax/reduction.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace spinrelax::cli {

// Row validity flags (bitmask, see README).
enum RowFlag : unsigned {
    flag_paired = 1u,           // doublet pairing succeeded in the working basis
    flag_gap_dominant = 2u,     // min inter-group gap >= 10x largest tensor element
    flag_series_converged = 4u, // reduced: series reached its term tolerance
    flag_converged = 8u,        // reduced: self-consistency converged
    flag_slow_mode = 16u,       // a slow mode passed the population filter
    flag_overdamped = 32u       // ground doublet: gamma' >= 2 Delta
};

struct PointResult {
    double temperature = 0.0;  // k_B T, energy units
    double field = 0.0;
    std::string method;
    bool has_lambda = false;
    double lambda = 0.0;
    bool has_tunneling = false;
    double gamma_tunnel_g = 0.0;  // ground-doublet general tunneling rate
    double gamma_corr_max = 0.0;  // largest off-diagonal correction magnitude
    int iterations = 0;
    unsigned flags = 0;
    std::string error;  // empty when the method succeeded
};

struct SweepResult {
    std::vector<std::string> method_names;  // expanded method x basis instances
    std::vector<PointResult> rows;          // (T, B) lexicographic, methods in order
    std::vector<std::string> warnings;
};

// All grid points, parallelizable over points with deterministic collection.
SweepResult run_sweep(const RunConfig& cfg, int threads = 1);

// Documented CSV: T,Bz,method,lambda,gamma_tunnel_g,gamma_corr_max,iters,valid_flags,error
void emit_csv(const SweepResult& result, const RunConfig& cfg, std::ostream& out);
std::string csv_string(const SweepResult& result, const RunConfig& cfg);

// Two-column (T, lambda) plot files, one per method instance, named
// lambda_<method>.dat under dir.
void emit_plot_files(const SweepResult& result, const RunConfig& cfg, const std::string& dir);

// Tunneling scan at the first grid temperature: per field value the ground
// doublet's bias, splitting, dephasing, general tunneling rate and the
// incoherent-limit formula.
struct TunnelingRow {
    double field = 0.0;
    double bias = 0.0;
    double splitting = 0.0;
    double gamma_re = 0.0;
    double gamma_im = 0.0;
    bool has_rates = false;
    double tunneling_rate = 0.0;
    double incoherent = 0.0;
    double lambda = 0.0;
    std::string error;
};
std::vector<TunnelingRow> run_tunneling_scan(const RunConfig& cfg);
void emit_tunneling_csv(const std::vector<TunnelingRow>& rows, const RunConfig& cfg,
                        std::ostream& out);

}  // namespace spinrelax::cli
