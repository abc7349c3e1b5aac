// sweep.cpp

#include "spinrelax/sweep.hpp"

#include "spinrelax/nonsecular.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace spinrelax::cli {

namespace {

std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct MethodInstance {
    std::string name;
    std::string kind;   // nonsecular | semisecular | reduced | secular
    std::string basis;  // localized | eigen
};

std::vector<MethodInstance> expand_methods(const RunConfig& cfg) {
    std::vector<std::string> bases;
    if (cfg.basis == "both") {
        bases = { "localized", "eigen" };
    } else {
        bases = { cfg.basis };
    }
    std::vector<MethodInstance> out;
    for (const auto& m : cfg.methods) {
        if (m == "secular_localized") {
            out.push_back({ m, "secular", "localized" });
        } else if (m == "secular_eigen") {
            out.push_back({ m, "secular", "eigen" });
        } else {
            for (const auto& b : bases) out.push_back({ m + "_" + b, m, b });
        }
    }
    return out;
}

// Everything derived once per grid point and shared across methods.
struct PointContext {
    double temperature = 0.0;
    double field = 0.0;
    Matrix h_product;
    spin::EigenSystem es;
    redfield::RedfieldTensor r_eigen;
    Matrix h_eigen;
    reduction::PairTable pairs_eigen;
    bool eigen_pairs_ok = false;
    std::string eigen_pairs_error;
    redfield::RedfieldTensor r_localized;
    Matrix h_localized;
    reduction::PairTable pairs_localized;
    Matrix eigen_to_localized;  // <loc m| eig a>
    bool localized_ok = false;
    unsigned base_flags = 0;
};

struct SweepEngine {
    const RunConfig& cfg;
    spin::SpinOperators ops;
    bath::BathModel bath_model;
    spin::EigenSystem zero_field_es;
    spin::DoubletStructure zero_field_ds;
    spin::LocalizedBasis localized;
    int ground_doublet = -1;

    explicit SweepEngine(const RunConfig& config)
        : cfg(config),
          ops(spin::build_spin_operators(config.s)),
          bath_model(config.bath_model(ops)) {
        const Matrix h0 = spin::build_hamiltonian(cfg.spin_parameters(0.0));
        zero_field_es = spin::diagonalize(h0);
        zero_field_ds = spin::pair_doublets(zero_field_es, cfg.pairing_threshold);
        localized = spin::build_localized_basis(zero_field_es, zero_field_ds);
        if (zero_field_ds.is_paired(0)) {
            ground_doublet = zero_field_ds.doublet_of[0];
        } else if (zero_field_ds.num_doublets() > 0) {
            ground_doublet = 0;
        }
    }

    PointContext make_context(double temperature, double field) const {
        PointContext ctx;
        ctx.temperature = temperature;
        ctx.field = field;
        ctx.h_product = spin::build_hamiltonian(cfg.spin_parameters(field));
        ctx.es = spin::diagonalize(ctx.h_product);
        ctx.r_eigen = redfield::build_redfield_eigenbasis(ctx.es, bath_model, temperature);
        ctx.h_eigen = Matrix::Zero(ctx.es.dim, ctx.es.dim);
        for (int i = 0; i < ctx.es.dim; ++i) ctx.h_eigen(i, i) = ctx.es.energies(i);
        try {
            ctx.pairs_eigen = reduction::PairTable::build(
                spin::pair_doublets(ctx.es, cfg.pairing_threshold));
            ctx.eigen_pairs_ok = true;
        } catch (const std::exception& e) {
            ctx.eigen_pairs_error = e.what();
        }
        const Matrix w = localized.vectors.adjoint() * ctx.es.vectors;
        ctx.eigen_to_localized = w;
        ctx.r_localized = redfield::transform_tensor(ctx.r_eigen, w, redfield::BasisTag::localized);
        ctx.h_localized = localized.vectors.adjoint() * ctx.h_product * localized.vectors;
        ctx.pairs_localized = reduction::PairTable::build(zero_field_ds);
        ctx.localized_ok = true;

        const double r_scale = max_abs(ctx.r_eigen.elements);
        if (zero_field_ds.num_doublets() + static_cast<int>(zero_field_ds.singlets.size()) > 1 &&
            zero_field_ds.min_inter_group_gap() >= 10.0 * r_scale) {
            ctx.base_flags |= flag_gap_dominant;
        }
        if (ground_doublet >= 0) {
            const auto& pr = zero_field_ds.pairs[static_cast<std::size_t>(ground_doublet)];
            const double delta = 2.0 * std::abs(ctx.h_localized(pr[0], pr[1]));
            const double gamma_re =
                std::real(ctx.r_localized.dephasing_rate(pr[0], pr[1]));
            if (gamma_re >= 2.0 * delta) ctx.base_flags |= flag_overdamped;
        }
        return ctx;
    }

    reduction::SelfConsistentOptions reduced_options() const {
        reduction::SelfConsistentOptions opt;
        opt.term_tol = cfg.series_term_tol;
        opt.tol = cfg.self_consistency_tol;
        opt.max_iter = cfg.max_iterations;
        opt.damping = cfg.damping;
        opt.overlap_threshold = cfg.overlap_threshold;
        if (cfg.series_order == "adaptive") {
            opt.max_order = cfg.max_series_order;
        } else {
            const int order = std::stoi(cfg.series_order);
            if (order == 0) {
                opt.zeroth_only = true;
            } else {
                opt.max_order = order;
                opt.term_tol = 0.0;  // fixed order: no early stop
            }
        }
        return opt;
    }

    PointResult run_method(const PointContext& ctx, const MethodInstance& mi) const {
        PointResult row;
        row.temperature = ctx.temperature;
        row.field = ctx.field;
        row.method = mi.name;
        row.flags = ctx.base_flags;
        try {
            const bool eigen_basis = mi.basis == "eigen";
            const redfield::RedfieldTensor& r = eigen_basis ? ctx.r_eigen : ctx.r_localized;
            const Matrix& h = eigen_basis ? ctx.h_eigen : ctx.h_localized;
            if (mi.kind != "secular") {
                if (eigen_basis && !ctx.eigen_pairs_ok && mi.kind != "nonsecular") {
                    throw std::runtime_error(ctx.eigen_pairs_error);
                }
                row.flags |= flag_paired;
            }
            const reduction::PairTable& pairs =
                eigen_basis ? ctx.pairs_eigen : ctx.pairs_localized;
            // Population overlaps are measured in the localized (well) frame
            // regardless of the working basis, so mode selection is
            // basis-invariant.
            const Matrix* to_observable = eigen_basis ? &ctx.eigen_to_localized : nullptr;

            if (mi.kind == "nonsecular") {
                const auto gen = redfield::build_generator(r, h);
                const auto sp = solver::spectrum(gen);
                const auto slow = solver::slow_rate(sp, cfg.overlap_threshold, to_observable);
                row.lambda = slow.rate;
                row.has_lambda = true;
                row.flags |= flag_slow_mode;
            } else if (mi.kind == "semisecular") {
                reduction::SemiSecularOptions opt;
                opt.overlap_threshold = cfg.overlap_threshold;
                opt.to_observable = to_observable;
                const auto res = reduction::solve_semisecular(r, h, pairs, opt);
                row.lambda = res.lambda;
                row.has_lambda = true;
                row.flags |= flag_slow_mode;
            } else if (mi.kind == "reduced") {
                auto opts = reduced_options();
                opts.to_observable = to_observable;
                const auto sol = reduction::solve_self_consistent(r, h, pairs, opts);
                row.lambda = sol.lambda;
                row.has_lambda = true;
                row.iterations = sol.iterations;
                row.flags |= flag_converged | flag_slow_mode;
                if (sol.rates.zeroth_order || sol.series.converged) {
                    row.flags |= flag_series_converged;
                }
                if (ground_doublet >= 0 && pairs.num_doublets() > ground_doublet) {
                    const int p = pairs.rep_pair(ground_doublet);
                    row.gamma_tunnel_g = sol.rates.tunneling_into_partner(pairs, p);
                    double corr_max = 0.0;
                    const auto& corr = sol.rates.correction;
                    for (Eigen::Index i = 0; i < corr.rows(); ++i) {
                        for (Eigen::Index j = 0; j < corr.cols(); ++j) {
                            if (i != j) corr_max = std::max(corr_max, std::abs(corr(i, j)));
                        }
                    }
                    row.gamma_corr_max = corr_max;
                    row.has_tunneling = true;
                }
            } else {  // plain secular
                const auto mode = reduction::plain_secular_rate(r);
                row.lambda = mode.rate;
                row.has_lambda = true;
                row.flags |= flag_slow_mode;
            }
        } catch (const std::exception& e) {
            row.error = e.what();
            // Error strings can contain commas/newlines; keep CSV-safe.
            for (char& c : row.error) {
                if (c == ',' || c == '\n' || c == '\r') c = ';';
            }
        }
        return row;
    }
};

}  // namespace

SweepResult run_sweep(const RunConfig& cfg, int threads) {
    const SweepEngine engine(cfg);
    const auto methods = expand_methods(cfg);

    SweepResult result;
    result.warnings = cfg.warnings;
    for (const auto& m : methods) result.method_names.push_back(m.name);

    struct Point {
        double temperature, field;
    };
    std::vector<Point> points;
    for (double t : cfg.temperatures) {
        for (double b : cfg.fields) points.push_back({ t, b });
    }
    std::vector<std::vector<PointResult>> per_point(points.size());

    auto work = [&](std::size_t idx) {
        std::vector<PointResult> rows;
        try {
            const PointContext ctx = engine.make_context(points[idx].temperature, points[idx].field);
            for (const auto& mi : methods) rows.push_back(engine.run_method(ctx, mi));
        } catch (const std::exception& e) {
            // Context construction failed: every method reports the error.
            for (const auto& mi : methods) {
                PointResult row;
                row.temperature = points[idx].temperature;
                row.field = points[idx].field;
                row.method = mi.name;
                row.error = e.what();
                for (char& c : row.error) {
                    if (c == ',' || c == '\n' || c == '\r') c = ';';
                }
                rows.push_back(std::move(row));
            }
        }
        per_point[idx] = std::move(rows);
    };

    if (threads <= 1 || points.size() <= 1) {
        for (std::size_t i = 0; i < points.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{ 0 };
        const int n_workers = std::min<std::size_t>(threads, points.size());
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t idx = next.fetch_add(1);
                    if (idx >= per_point.size()) return;
                    work(idx);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    for (auto& rows : per_point) {
        for (auto& row : rows) result.rows.push_back(std::move(row));
    }
    return result;
}

void emit_csv(const SweepResult& result, const RunConfig& cfg, std::ostream& out) {
    const double scale = cfg.rate_scale();
    out << "T,Bz,method,lambda,gamma_tunnel_g,gamma_corr_max,iters,valid_flags,error\n";
    for (const auto& row : result.rows) {
        out << format17(row.temperature) << ',' << format17(row.field) << ',' << row.method << ',';
        if (row.has_lambda) out << format17(row.lambda * scale);
        out << ',';
        if (row.has_tunneling) out << format17(row.gamma_tunnel_g * scale);
        out << ',';
        if (row.has_tunneling) out << format17(row.gamma_corr_max * scale);
        out << ',' << row.iterations << ',' << row.flags << ',' << row.error << '\n';
    }
}

std::string csv_string(const SweepResult& result, const RunConfig& cfg) {
    std::ostringstream os;
    emit_csv(result, cfg, os);
    return os.str();
}

void emit_plot_files(const SweepResult& result, const RunConfig& cfg, const std::string& dir) {
    const double scale = cfg.rate_scale();
    std::filesystem::create_directories(dir);
    for (const auto& name : result.method_names) {
        std::ofstream out(std::filesystem::path(dir) / ("lambda_" + name + ".dat"));
        if (!out) throw std::runtime_error("emit_plot_files: cannot write into " + dir);
        for (const auto& row : result.rows) {
            if (row.method != name) continue;
            out << format17(row.temperature) << ' '
                << (row.has_lambda ? format17(row.lambda * scale) : "nan") << '\n';
        }
    }
}

std::vector<TunnelingRow> run_tunneling_scan(const RunConfig& cfg) {
    const SweepEngine engine(cfg);
    std::vector<TunnelingRow> rows;
    const double temperature = cfg.temperatures.front();
    for (double field : cfg.fields) {
        TunnelingRow row;
        row.field = field;
        try {
            const PointContext ctx = engine.make_context(temperature, field);
            if (engine.ground_doublet < 0) throw std::runtime_error("no doublet to scan");
            const auto dp = spin::extract_doublet_params(ctx.h_product, engine.localized);
            row.bias = dp.bias[static_cast<std::size_t>(engine.ground_doublet)];
            row.splitting = dp.splitting[static_cast<std::size_t>(engine.ground_doublet)];
            const auto& pr =
                engine.zero_field_ds.pairs[static_cast<std::size_t>(engine.ground_doublet)];
            const cxd gamma = ctx.r_localized.dephasing_rate(pr[0], pr[1]);
            row.gamma_re = gamma.real();
            row.gamma_im = gamma.imag();
            const auto sol = reduction::solve_self_consistent(ctx.r_localized, ctx.h_localized,
                                                              ctx.pairs_localized,
                                                              engine.reduced_options());
            const int p = ctx.pairs_localized.rep_pair(engine.ground_doublet);
            row.tunneling_rate = sol.rates.tunneling_into_partner(ctx.pairs_localized, p);
            row.lambda = sol.lambda;
            row.incoherent =
                reduction::incoherent_rate(row.splitting, row.bias, row.gamma_re, row.gamma_im);
            row.has_rates = true;
        } catch (const std::exception& e) {
            row.error = e.what();
            for (char& c : row.error) {
                if (c == ',' || c == '\n' || c == '\r') c = ';';
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void emit_tunneling_csv(const std::vector<TunnelingRow>& rows, const RunConfig& cfg,
                        std::ostream& out) {
    const double scale = cfg.rate_scale();
    out << "Bz,W,delta,gamma_re,gamma_im,tunneling_rate,incoherent_rate,lambda,error\n";
    for (const auto& row : rows) {
        out << format17(row.field) << ',' << format17(row.bias) << ',' << format17(row.splitting)
            << ',' << format17(row.gamma_re * scale) << ',' << format17(row.gamma_im * scale) << ',';
        if (row.has_rates) out << format17(row.tunneling_rate * scale);
        out << ',';
        if (row.has_rates) out << format17(row.incoherent * scale);
        out << ',';
        if (row.has_rates) out << format17(row.lambda * scale);
        out << ',' << row.error << '\n';
    }
}

}  // namespace spinrelax::cli
