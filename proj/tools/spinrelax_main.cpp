// spinrelax_main.cpp - command-line front end
//
// Subcommands:
//   rates      compute the relaxation-rate sweep and emit CSV / plot data
//   check      tensor and reduction property suite (exit 3 on violation)
//   compare    per-point method-ratio report on stdout
//   tunneling  ground-doublet tunneling rate vs bias at fixed temperature
//
// Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 property violation.

#include "spinrelax/config.hpp"
#include "spinrelax/kernels.hpp"
#include "spinrelax/nonsecular.hpp"
#include "spinrelax/reduction.hpp"
#include "spinrelax/sweep.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace {

using namespace spinrelax;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::string format = "csv";
    unsigned long seed = 12345;
    int threads = 1;
    bool strict = true;
};

int run_rates(const CommonArgs& args) {
    const cli::RunConfig cfg = cli::load_config_file(args.config_path, args.strict);
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";

    const cli::SweepResult result = cli::run_sweep(cfg, args.threads);
    std::filesystem::create_directories(args.out_dir);
    {
        std::ofstream echo(std::filesystem::path(args.out_dir) / "config_echo.cfg");
        echo << cli::echo_config(cfg);
    }
    if (args.format == "csv" || args.format == "both") {
        std::ofstream out(std::filesystem::path(args.out_dir) / "rates.csv");
        if (!out) {
            std::cerr << "error: cannot write into " << args.out_dir << "\n";
            return 2;
        }
        cli::emit_csv(result, cfg, out);
    }
    if (args.format == "plot" || args.format == "both") {
        cli::emit_plot_files(result, cfg, args.out_dir);
    }
    int failures = 0;
    for (const auto& row : result.rows) {
        if (!row.error.empty()) {
            ++failures;
            std::cerr << "point (T=" << row.temperature << ", B=" << row.field << ", "
                      << row.method << ") failed: " << row.error << "\n";
        }
    }
    std::cout << result.rows.size() - failures << "/" << result.rows.size()
              << " rows computed\n";
    return failures == 0 ? 0 : 2;
}

struct PropertyCheck {
    std::string name;
    double violation;
    double tolerance;
    bool pass() const { return violation <= tolerance; }
};

int run_check(const CommonArgs& args, const std::string& dump_path) {
    const cli::RunConfig cfg = cli::load_config_file(args.config_path, args.strict);
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";

    const auto ops = spin::build_spin_operators(cfg.s);
    const auto bath_model = cfg.bath_model(ops);
    const double temperature = cfg.temperatures.front();
    const double field = cfg.fields.front();

    const Matrix h0 = spin::build_hamiltonian(cfg.spin_parameters(0.0));
    const auto es0 = spin::diagonalize(h0);
    const auto ds0 = spin::pair_doublets(es0, cfg.pairing_threshold);
    const auto localized = spin::build_localized_basis(es0, ds0);

    const Matrix h = spin::build_hamiltonian(cfg.spin_parameters(field));
    const auto es = spin::diagonalize(h);
    const auto r_eigen = redfield::build_redfield_eigenbasis(es, bath_model, temperature);
    Matrix h_eigen = Matrix::Zero(es.dim, es.dim);
    for (int i = 0; i < es.dim; ++i) h_eigen(i, i) = es.energies(i);

    if (!dump_path.empty()) {
        std::ofstream dump(dump_path);
        redfield::dump_tensor(r_eigen, dump);
    }

    std::vector<PropertyCheck> checks;
    auto add = [&checks](const std::string& name, double violation, double tol) {
        checks.push_back({ name, violation, tol });
    };

    const auto rep_eigen = redfield::verify_tensor_properties(r_eigen);
    add("tensor conjugation symmetry (eigen)", rep_eigen.conjugation_violation, 1e-12);
    add("tensor trace sum rule (eigen)", rep_eigen.trace_violation, 1e-12);

    const Matrix w_loc = localized.vectors.adjoint() * es.vectors;
    const auto r_loc = redfield::transform_tensor(r_eigen, w_loc, redfield::BasisTag::localized);
    const auto rep_loc = redfield::verify_tensor_properties(r_loc);
    add("tensor conjugation symmetry (localized)", rep_loc.conjugation_violation, 1e-12);
    add("tensor trace sum rule (localized)", rep_loc.trace_violation, 1e-12);

    std::mt19937_64 rng(args.seed);
    std::normal_distribution<double> dist;
    Matrix gauss(es.dim, es.dim);
    for (int i = 0; i < es.dim; ++i) {
        for (int j = 0; j < es.dim; ++j) gauss(i, j) = cxd(dist(rng), dist(rng));
    }
    const Matrix w_rand = Eigen::HouseholderQR<Matrix>(gauss).householderQ();
    const auto r_rand = redfield::transform_tensor(r_eigen, w_rand, redfield::BasisTag::custom);
    const auto rep_rand = redfield::verify_tensor_properties(r_rand);
    add("tensor conjugation symmetry (random basis)", rep_rand.conjugation_violation, 1e-12);
    add("tensor trace sum rule (random basis)", rep_rand.trace_violation, 1e-12);

    const auto back = redfield::transform_tensor(
        r_rand, w_rand.adjoint(), redfield::BasisTag::eigen);
    add("basis round trip", max_abs(Matrix(back.elements - r_eigen.elements)) /
                                std::max(max_abs(r_eigen.elements), 1e-300),
        1e-12);

    // Detailed balance of eigenbasis population rates.
    double db_violation = 0.0;
    double positivity = 0.0;
    for (int m = 0; m < es.dim; ++m) {
        for (int n = 0; n < es.dim; ++n) {
            if (m == n) continue;
            const double fwd = r_eigen.population_rate(m, n);
            const double bwd = r_eigen.population_rate(n, m);
            positivity = std::min(positivity, fwd);
            if (fwd > 1e-14 && bwd > 1e-14) {
                const double expected = std::exp(-(es.energies(m) - es.energies(n)) / temperature);
                db_violation = std::max(db_violation, std::abs(fwd / bwd - expected) /
                                                          std::max(expected, 1e-300));
            }
        }
    }
    add("detailed balance of population rates", db_violation, 1e-10);
    add("population rate positivity (negative excess)", std::max(-positivity, 0.0),
        1e-12 * std::max(max_abs(r_eigen.elements), 1e-300));

    // Generator trace preservation: columns of the diagonal rows sum to zero.
    const auto gen = redfield::build_generator(r_eigen, h_eigen);
    double trace_pres = 0.0;
    for (int k = 0; k < es.dim; ++k) {
        for (int l = 0; l < es.dim; ++l) {
            cxd acc = 0.0;
            for (int m = 0; m < es.dim; ++m) {
                acc += gen.matrix(flat_index(m, m, es.dim), flat_index(k, l, es.dim));
            }
            trace_pres = std::max(trace_pres, std::abs(acc));
        }
    }
    add("generator trace preservation", trace_pres / std::max(max_abs(gen.matrix), 1e-300), 1e-12);

    // Reduction identities in the localized basis.
    const auto pairs = reduction::PairTable::build(ds0);
    const Matrix h_loc = localized.vectors.adjoint() * h * localized.vectors;
    if (pairs.num_pairs() > 0) {
        const auto coeffs = reduction::compute_coefficients(r_loc, h_loc, pairs, 0.0);
        double c_conj = 0.0, d_conj = 0.0;
        for (int p = 0; p < pairs.num_pairs(); ++p) {
            const int pc = pairs.conj_index(p);
            c_conj = std::max(c_conj, std::abs(coeffs.c(pc) + std::conj(coeffs.c(p))));
            for (int k = 0; k < es.dim; ++k) {
                d_conj = std::max(d_conj,
                                  std::abs(coeffs.d_pop(pc, k) - std::conj(coeffs.d_pop(p, k))));
            }
            for (int q = 0; q < pairs.num_pairs(); ++q) {
                d_conj = std::max(d_conj, std::abs(coeffs.d_coh(pc, pairs.conj_index(q)) -
                                                   std::conj(coeffs.d_coh(p, q))));
            }
        }
        const double c_scale = std::max(coeffs.c.cwiseAbs().maxCoeff(), 1e-300);
        const double d_scale = std::max({ max_abs(coeffs.d_pop), max_abs(coeffs.d_coh), 1e-300 });
        add("C conjugation pairs", c_conj / c_scale, 1e-10);
        add("D conjugation pairs", d_conj / d_scale, 1e-10);

        const auto series =
            reduction::compute_fg(coeffs, pairs, cfg.max_series_order, cfg.series_term_tol);
        const auto rates = reduction::compute_rates(series, r_loc, h_loc, pairs);
        add("rate realness residue", rates.max_imag_residue, 1e-8);

        double antisym = 0.0;
        for (int p = 0; p < pairs.num_pairs(); ++p) {
            for (int d = 0; d < pairs.num_doublets(); ++d) {
                antisym = std::max(antisym, std::abs(rates.tunneling(p, d) +
                                                     rates.tunneling(pairs.conj_index(p), d)));
            }
        }
        add("tunneling antisymmetry", antisym / std::max(max_abs(rates.tunneling), 1e-300),
            1e-10);

        double corr_sums = 0.0;
        for (int k = 0; k < es.dim; ++k) {
            corr_sums = std::max(corr_sums, std::abs(rates.correction.col(k).sum()));
        }
        add("correction column sums", corr_sums / std::max(max_abs(rates.correction), 1e-300),
            1e-10);

        const auto m = reduction::assemble_effective_generator(rates, r_loc, pairs);
        double col_sums = 0.0;
        for (int k = 0; k < es.dim; ++k) col_sums = std::max(col_sums, std::abs(m.col(k).sum()));
        add("effective generator column sums", col_sums / std::max(max_abs(m), 1e-300), 1e-10);
    }

    bool all_pass = true;
    for (const auto& c : checks) {
        std::printf("%-45s %10.3e (tol %8.1e)  %s\n", c.name.c_str(), c.violation, c.tolerance,
                    c.pass() ? "PASS" : "FAIL");
        all_pass = all_pass && c.pass();
    }
    return all_pass ? 0 : 3;
}

int run_compare(const CommonArgs& args) {
    const cli::RunConfig cfg = cli::load_config_file(args.config_path, args.strict);
    const cli::SweepResult result = cli::run_sweep(cfg, args.threads);
    if (result.method_names.size() < 2) {
        std::cerr << "compare: need at least two methods\n";
        return 1;
    }
    const std::string& reference = result.method_names.front();
    std::printf("# ratios of lambda against %s\n", reference.c_str());
    std::printf("%12s %12s", "T", "Bz");
    for (std::size_t i = 1; i < result.method_names.size(); ++i) {
        std::printf(" %22s", result.method_names[i].c_str());
    }
    std::printf("\n");
    const std::size_t n_methods = result.method_names.size();
    for (std::size_t at = 0; at + n_methods <= result.rows.size(); at += n_methods) {
        const auto& ref_row = result.rows[at];
        std::printf("%12.6g %12.6g", ref_row.temperature, ref_row.field);
        for (std::size_t i = 1; i < n_methods; ++i) {
            const auto& row = result.rows[at + i];
            if (ref_row.has_lambda && row.has_lambda && ref_row.lambda != 0.0) {
                std::printf(" %22.15g", row.lambda / ref_row.lambda);
            } else {
                std::printf(" %22s", "n/a");
            }
        }
        std::printf("\n");
    }
    return 0;
}

int run_tunneling(const CommonArgs& args) {
    const cli::RunConfig cfg = cli::load_config_file(args.config_path, args.strict);
    const auto rows = cli::run_tunneling_scan(cfg);
    std::filesystem::create_directories(args.out_dir);
    std::ofstream out(std::filesystem::path(args.out_dir) / "tunneling.csv");
    if (!out) {
        std::cerr << "error: cannot write into " << args.out_dir << "\n";
        return 2;
    }
    cli::emit_tunneling_csv(rows, cfg, out);
    int failures = 0;
    for (const auto& row : rows) {
        if (!row.error.empty()) {
            ++failures;
            std::cerr << "field " << row.field << " failed: " << row.error << "\n";
        }
    }
    return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{ "spin-phonon relaxation rates from the Redfield tensor" };
    app.require_subcommand(1);

    CommonArgs args;
    std::string dump_path;

    auto add_common = [&args](CLI::App* cmd, bool with_out) {
        cmd->add_option("--config", args.config_path, "configuration file")->required();
        if (with_out) {
            cmd->add_option("--out", args.out_dir, "output directory");
            cmd->add_option("--format", args.format, "csv | plot | both")
                ->check(CLI::IsMember({ "csv", "plot", "both" }));
        }
        cmd->add_option("--seed", args.seed, "seed for randomized checks");
        cmd->add_option("--threads", args.threads, "worker threads for sweep points");
        cmd->add_flag("--strict", args.strict, "reject unknown config keys (default on)");
    };

    auto* rates = app.add_subcommand("rates", "relaxation-rate sweep");
    add_common(rates, true);
    auto* check = app.add_subcommand("check", "tensor + reduction property suite");
    add_common(check, false);
    check->add_option("--dump-tensor", dump_path, "write the eigenbasis tensor to a file");
    auto* compare = app.add_subcommand("compare", "method-ratio report");
    add_common(compare, false);
    auto* tunneling = app.add_subcommand("tunneling", "tunneling rate vs bias");
    add_common(tunneling, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (rates->parsed()) return run_rates(args);
        if (check->parsed()) return run_check(args, dump_path);
        if (compare->parsed()) return run_compare(args);
        if (tunneling->parsed()) return run_tunneling(args);
    } catch (const std::exception& e) {
        const std::string what = e.what();
        std::cerr << "error: " << what << "\n";
        if (what.rfind("config:", 0) == 0) return 1;
        return 2;
    }
    return 0;
}
