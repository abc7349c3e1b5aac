// bath.cpp

#include "spinrelax/bath.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spinrelax::bath {

double SpectralDensity::value(double omega) const {
    if (omega < 0.0) throw std::invalid_argument("SpectralDensity::value: omega must be >= 0");
    switch (form) {
        case SpectralForm::debye_cubic:
            return prefactor * omega * omega * omega * std::exp(-omega / cutoff);
        case SpectralForm::ohmic:
            return prefactor * omega * std::exp(-omega / cutoff);
        case SpectralForm::tabulated: {
            if (table.empty() || omega < table.front().first || omega > table.back().first) {
                return 0.0;
            }
            auto hi = std::lower_bound(table.begin(), table.end(), omega,
                                       [](const auto& row, double w) { return row.first < w; });
            if (hi == table.begin()) return hi->second;
            auto lo = hi - 1;
            const double span = hi->first - lo->first;
            if (span <= 0.0) return lo->second;
            const double t = (omega - lo->first) / span;
            return (1.0 - t) * lo->second + t * hi->second;
        }
    }
    return 0.0;
}

double SpectralDensity::zero_frequency_slope() const {
    switch (form) {
        case SpectralForm::debye_cubic:
            return 0.0;
        case SpectralForm::ohmic:
            return prefactor;
        case SpectralForm::tabulated: {
            if (table.empty() || table.front().first > 0.0) return 0.0;  // J = 0 below the range
            if (table.size() < 2) return 0.0;
            const double span = table[1].first - table[0].first;
            return span > 0.0 ? (table[1].second - table[0].second) / span : 0.0;
        }
    }
    return 0.0;
}

SpectralDensity SpectralDensity::debye(double alpha, double cutoff) {
    if (cutoff <= 0.0) throw std::invalid_argument("SpectralDensity::debye: cutoff must be > 0");
    SpectralDensity j;
    j.form = SpectralForm::debye_cubic;
    j.prefactor = alpha;
    j.cutoff = cutoff;
    return j;
}

SpectralDensity SpectralDensity::ohmic(double alpha, double cutoff) {
    if (cutoff <= 0.0) throw std::invalid_argument("SpectralDensity::ohmic: cutoff must be > 0");
    SpectralDensity j;
    j.form = SpectralForm::ohmic;
    j.prefactor = alpha;
    j.cutoff = cutoff;
    return j;
}

SpectralDensity SpectralDensity::from_table(std::vector<std::pair<double, double>> table) {
    if (table.size() < 2) throw std::invalid_argument("tabulated density needs >= 2 rows");
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].first < 0.0) throw std::invalid_argument("tabulated density: omega < 0");
        if (table[i].second < 0.0) throw std::invalid_argument("tabulated density: J < 0");
        if (i > 0 && table[i].first <= table[i - 1].first) {
            throw std::invalid_argument("tabulated density: omega must be strictly increasing");
        }
    }
    if (table.front().first == 0.0 && table.front().second != 0.0) {
        throw std::invalid_argument("tabulated density: J(0) must vanish");
    }
    SpectralDensity j;
    j.form = SpectralForm::tabulated;
    j.table = std::move(table);
    return j;
}

SpectralDensity SpectralDensity::from_table_stream(std::istream& in) {
    std::vector<std::pair<double, double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        double w, j;
        if (ls >> w >> j) rows.emplace_back(w, j);
    }
    return from_table(std::move(rows));
}

SpectralDensity SpectralDensity::from_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open spectral density table: " + path);
    return from_table_stream(in);
}

double bose_occupation(double omega, double temperature) {
    if (omega <= 0.0) throw std::invalid_argument("bose_occupation: omega must be > 0");
    if (temperature < 0.0) throw std::invalid_argument("bose_occupation: T must be >= 0");
    if (temperature == 0.0) return 0.0;
    return 1.0 / std::expm1(omega / temperature);
}

double bath_spectrum(const SpectralDensity& j, double omega, double temperature) {
    if (temperature < 0.0) throw std::invalid_argument("bath_spectrum: T must be >= 0");
    if (omega > 0.0) {
        const double n = temperature > 0.0 ? bose_occupation(omega, temperature) : 0.0;
        return j.value(omega) * (n + 1.0);
    }
    if (omega < 0.0) {
        if (temperature == 0.0) return 0.0;
        return j.value(-omega) * bose_occupation(-omega, temperature);
    }
    return temperature * j.zero_frequency_slope();
}

BathSpectrum make_spectrum(const CouplingChannel& ch, double temperature) {
    return BathSpectrum{ &ch.density, ch.strength * ch.strength, temperature };
}

}  // namespace spinrelax::bath
