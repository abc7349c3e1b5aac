// spin_model.cpp

#include "spinrelax/spin_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spinrelax::spin {

namespace {

constexpr double kDegenerateTol = 1e-10;  // relative to spectral range

bool is_half_integer_spin(double s) {
    const double twice = 2.0 * s;
    return s > 0.0 && std::abs(twice - std::round(twice)) < 1e-12;
}

// Rotate each column so its largest-modulus entry (ties: lowest row) is real
// positive.
void fix_column_phases(Matrix& u) {
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
        Eigen::Index best = 0;
        double best_mag = -1.0;
        for (Eigen::Index r = 0; r < u.rows(); ++r) {
            const double mag = std::abs(u(r, c));
            if (mag > best_mag + 1e-14) {
                best_mag = mag;
                best = r;
            }
        }
        if (best_mag > 0.0) u.col(c) *= std::conj(u(best, c)) / best_mag;
    }
}

// Product-state rows ordered by |m_S| descending, ties broken by lower row
// index (m_S descending layout puts +S at row 0).
std::vector<Eigen::Index> overlap_target_order(Eigen::Index dim) {
    std::vector<Eigen::Index> rows(dim);
    for (Eigen::Index i = 0; i < dim; ++i) rows[i] = i;
    const double s = 0.5 * static_cast<double>(dim - 1);
    std::stable_sort(rows.begin(), rows.end(), [s](Eigen::Index a, Eigen::Index b) {
        return std::abs(s - static_cast<double>(a)) > std::abs(s - static_cast<double>(b));
    });
    return rows;
}

}  // namespace

SpinOperators build_spin_operators(double s) {
    if (!is_half_integer_spin(s)) {
        throw std::invalid_argument("build_spin_operators: S must be a positive half-integer");
    }
    const int dim = static_cast<int>(std::lround(2.0 * s)) + 1;
    SpinOperators ops;
    ops.dim = dim;
    ops.sx = Matrix::Zero(dim, dim);
    ops.sy = Matrix::Zero(dim, dim);
    ops.sz = Matrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
        const double m = s - i;  // m_S descending
        ops.sz(i, i) = m;
        if (i > 0) {
            // <m+1| S+ |m> with m = s - i
            const double amp = std::sqrt(s * (s + 1.0) - m * (m + 1.0));
            ops.sx(i - 1, i) = 0.5 * amp;
            ops.sx(i, i - 1) = 0.5 * amp;
            ops.sy(i - 1, i) = cxd(0.0, -0.5) * amp;
            ops.sy(i, i - 1) = cxd(0.0, 0.5) * amp;
        }
    }
    return ops;
}

std::vector<std::string> validate(const SpinParameters& p) {
    if (!is_half_integer_spin(p.s)) {
        throw std::invalid_argument("SpinParameters: S must be a positive half-integer");
    }
    if (!p.field.allFinite() || !std::isfinite(p.axial) || !std::isfinite(p.rhombic)) {
        throw std::invalid_argument("SpinParameters: non-finite entries");
    }
    std::vector<std::string> warnings;
    if (p.axial != 0.0 && std::abs(p.rhombic) > std::abs(p.axial) / 3.0 + 1e-15) {
        std::ostringstream os;
        os << "|E| = " << std::abs(p.rhombic) << " exceeds |D|/3 = " << std::abs(p.axial) / 3.0
           << "; outside the standard convention";
        warnings.push_back(os.str());
    }
    return warnings;
}

Matrix operator_from_expression(const std::string& expr, const SpinOperators& ops) {
    Matrix out = Matrix::Zero(ops.dim, ops.dim);
    std::string term;
    std::istringstream stream(expr);
    bool any = false;
    while (std::getline(stream, term, '+')) {
        double coeff = 1.0;
        std::string word = term;
        if (const auto star = term.find('*'); star != std::string::npos) {
            coeff = std::stod(term.substr(0, star));
            word = term.substr(star + 1);
        }
        // strip spaces
        word.erase(std::remove_if(word.begin(), word.end(),
                                  [](unsigned char ch) { return std::isspace(ch); }),
                   word.end());
        if (word.empty()) throw std::invalid_argument("operator expression: empty term");
        const cxd iu(0.0, 1.0);
        Matrix prod = Matrix::Identity(ops.dim, ops.dim);
        for (char axis : word) {
            switch (axis) {
                case 'x': prod = prod * ops.sx; break;
                case 'y': prod = prod * ops.sy; break;
                case 'z': prod = prod * ops.sz; break;
                case 'p': prod = prod * (ops.sx + iu * ops.sy); break;  // S+
                case 'm': prod = prod * (ops.sx - iu * ops.sy); break;  // S-
                default:
                    throw std::invalid_argument(std::string("operator expression: bad axis '") +
                                                axis + "'");
            }
        }
        out += coeff * prod;
        any = true;
    }
    if (!any) throw std::invalid_argument("operator expression: empty");
    // Hermitize; symmetric for any word that is already Hermitian.
    return 0.5 * (out + out.adjoint());
}

Matrix build_hamiltonian(const SpinParameters& p) {
    validate(p);  // warnings are the caller's business; hard errors throw
    const SpinOperators ops = build_spin_operators(p.s);
    Matrix h = p.axial * (ops.sz * ops.sz).eval();
    h += p.rhombic * (ops.sx * ops.sx - ops.sy * ops.sy);
    h += p.g_factor * (p.field.x() * ops.sx + p.field.y() * ops.sy + p.field.z() * ops.sz);
    for (const auto& term : p.extra_terms) {
        h += term.coefficient * operator_from_expression(term.axes, ops);
    }
    // The construction is Hermitian by symmetry of each piece; enforce
    // exactness so downstream tolerance checks see clean input.
    h = 0.5 * (h + h.adjoint()).eval();
    return h;
}

EigenSystem diagonalize(const Matrix& h) {
    if (h.rows() != h.cols() || h.rows() == 0) {
        throw std::invalid_argument("diagonalize: matrix must be square and non-empty");
    }
    if (!is_hermitian(h, 1e-12)) {
        throw std::invalid_argument("diagonalize: matrix is not Hermitian to 1e-12");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("diagonalize: eigensolver failed");
    }
    EigenSystem es;
    es.dim = static_cast<int>(h.rows());
    es.energies = solver.eigenvalues();
    es.vectors = solver.eigenvectors();

    // Deterministic gauge inside degenerate clusters: project the preferred
    // product states onto the cluster subspace and re-orthonormalize.
    const double range = es.energies(es.dim - 1) - es.energies(0);
    const double tol = kDegenerateTol * std::max(range, 1e-300);
    const auto targets = overlap_target_order(es.dim);
    Eigen::Index c = 0;
    while (c < es.dim) {
        Eigen::Index end = c + 1;
        while (end < es.dim && es.energies(end) - es.energies(end - 1) <= tol) ++end;
        const Eigen::Index size = end - c;
        if (size > 1) {
            Matrix block = es.vectors.middleCols(c, size);
            const Matrix proj = block * block.adjoint();
            Matrix rebuilt(es.dim, size);
            Eigen::Index filled = 0;
            for (Eigen::Index t : targets) {
                if (filled == size) break;
                Vector v = proj.col(t);
                for (Eigen::Index j = 0; j < filled; ++j) {
                    v -= rebuilt.col(j).dot(v) * rebuilt.col(j);
                }
                const double nrm = v.norm();
                if (nrm > 1e-8) {
                    rebuilt.col(filled++) = v / nrm;
                }
            }
            if (filled == size) es.vectors.middleCols(c, size) = rebuilt;
        }
        c = end;
    }
    fix_column_phases(es.vectors);
    return es;
}

double DoubletStructure::doublet_gap(int d1, int d2) const {
    auto center = [this](int d) {
        const auto& pr = pairs[static_cast<std::size_t>(d)];
        return 0.5 * (energies(pr[0]) + energies(pr[1]));
    };
    return center(d1) - center(d2);
}

double DoubletStructure::min_inter_group_gap() const {
    // Collect group boundary energies in spectral order and take the smallest
    // distance between consecutive groups.
    struct Group {
        double lo, hi;
    };
    std::vector<Group> groups;
    for (const auto& pr : pairs) groups.push_back({ energies(pr[0]), energies(pr[1]) });
    for (int s : singlets) groups.push_back({ energies(s), energies(s) });
    std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.lo < b.lo; });
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < groups.size(); ++i) {
        best = std::min(best, groups[i].lo - groups[i - 1].hi);
    }
    return best;
}

DoubletStructure pair_doublets(const EigenSystem& es, double threshold) {
    if (threshold <= 0.0) throw std::invalid_argument("pair_doublets: threshold must be positive");
    const int n = es.dim;
    const double range = es.energies(n - 1) - es.energies(0);
    const double hard_tol = kDegenerateTol * std::max(range, 1e-300);

    std::vector<double> gap(static_cast<std::size_t>(std::max(n - 1, 0)));
    for (int i = 0; i + 1 < n; ++i) gap[i] = es.energies(i + 1) - es.energies(i);

    // Three (or more) mutually near-degenerate levels have no unique pairing.
    for (int i = 0; i + 1 < n - 1; ++i) {
        if (gap[i] <= hard_tol && gap[i + 1] <= hard_tol) {
            std::ostringstream os;
            os << "pair_doublets: levels " << i << ".." << i + 2
               << " are mutually degenerate (gaps " << gap[i] << ", " << gap[i + 1]
               << "); pairing is ambiguous";
            throw std::runtime_error(os.str());
        }
    }

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<int> candidates;
    for (int i = 0; i + 1 < n; ++i) {
        const double left = i > 0 ? gap[i - 1] : inf;
        const double right = i + 1 < n - 1 ? gap[i + 1] : inf;
        const double neighbour = std::min(left, right);
        const bool qualifies =
            gap[i] <= hard_tol || (std::isfinite(neighbour) ? gap[i] < threshold * neighbour
                                                            : gap[i] < threshold * range);
        if (qualifies) candidates.push_back(i);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&gap](int a, int b) { return gap[a] < gap[b]; });

    DoubletStructure ds;
    ds.energies = es.energies;
    ds.partner.assign(n, -1);
    ds.doublet_of.assign(n, -1);
    std::vector<bool> used(n, false);
    for (int i : candidates) {
        if (used[i] || used[i + 1]) continue;
        used[i] = used[i + 1] = true;
        ds.pairs.push_back({ i, i + 1 });
    }
    std::sort(ds.pairs.begin(), ds.pairs.end());  // doublets indexed by energy
    for (int d = 0; d < static_cast<int>(ds.pairs.size()); ++d) {
        const auto& pr = ds.pairs[static_cast<std::size_t>(d)];
        ds.partner[pr[0]] = pr[1];
        ds.partner[pr[1]] = pr[0];
        ds.doublet_of[pr[0]] = d;
        ds.doublet_of[pr[1]] = d;
    }
    for (int i = 0; i < n; ++i) {
        if (!used[i]) ds.singlets.push_back(i);
    }
    return ds;
}

LocalizedBasis build_localized_basis(const EigenSystem& zero_field, const DoubletStructure& ds) {
    const int n = zero_field.dim;
    if (ds.dim() != n) throw std::invalid_argument("build_localized_basis: dimension mismatch");
    LocalizedBasis lb;
    lb.vectors = zero_field.vectors;
    lb.structure = ds;

    const SpinOperators ops = build_spin_operators(0.5 * (n - 1));
    const double range = zero_field.energies(n - 1) - zero_field.energies(0);
    const double degenerate_tol = kDegenerateTol * std::max(range, 1e-300);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (const auto& pr : ds.pairs) {
        const double e_split = zero_field.energies(pr[1]) - zero_field.energies(pr[0]);
        Vector minus, plus;
        if (e_split <= degenerate_tol) {
            // Exactly degenerate pair: the parity combination is undefined and
            // the gauge-fixed eigenvectors are already maximally localized.
            minus = zero_field.vectors.col(pr[0]);
            plus = zero_field.vectors.col(pr[1]);
        } else {
            const Vector lower = zero_field.vectors.col(pr[0]);
            const Vector upper = zero_field.vectors.col(pr[1]);
            minus = inv_sqrt2 * (upper - lower);  // |m>
            plus = inv_sqrt2 * (upper + lower);   // |m'>
        }
        const double z_minus = std::real(minus.dot(ops.sz * minus));
        const double z_plus = std::real(plus.dot(ops.sz * plus));
        if (z_plus > z_minus + 1e-14) std::swap(minus, plus);
        lb.vectors.col(pr[0]) = minus;
        lb.vectors.col(pr[1]) = plus;
        // Phase convention: <m|H0|m'> = (E_upper - E_lower)/2 must be real and
        // non-negative; rotate |m'> to clean up any numerical residue.
        if (e_split > degenerate_tol) {
            const Vector lower = zero_field.vectors.col(pr[0]);
            const Vector upper = zero_field.vectors.col(pr[1]);
            const cxd h_off = 0.5 * e_split *
                              (lb.vectors.col(pr[0]).dot(upper) * upper.dot(lb.vectors.col(pr[1])) -
                               lb.vectors.col(pr[0]).dot(lower) * lower.dot(lb.vectors.col(pr[1])));
            const double mag = std::abs(h_off);
            if (mag > 0.0) lb.vectors.col(pr[1]) *= std::conj(h_off) / mag;
        }
    }
    return lb;
}

DoubletParameters extract_doublet_params(const Matrix& h, const LocalizedBasis& lb) {
    if (h.rows() != lb.vectors.rows()) {
        throw std::invalid_argument("extract_doublet_params: dimension mismatch");
    }
    const Matrix h_loc = lb.vectors.adjoint() * h * lb.vectors;
    DoubletParameters dp;
    for (const auto& pr : lb.structure.pairs) {
        dp.bias.push_back(std::real(h_loc(pr[0], pr[0]) - h_loc(pr[1], pr[1])));
        dp.splitting.push_back(2.0 * std::abs(h_loc(pr[0], pr[1])));
    }
    return dp;
}

}  // namespace spinrelax::spin
