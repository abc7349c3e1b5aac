// config.cpp

#include "spinrelax/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace spinrelax::cli {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::istringstream stream(value);
    std::string item;
    while (std::getline(stream, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' has a non-numeric value '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    const double v = parse_double(key, value);
    if (v != std::floor(v)) throw std::runtime_error("config: key '" + key + "' must be an integer");
    return static_cast<int>(v);
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const auto& item : split_list(value)) out.push_back(parse_double(key, item));
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join_doubles(const std::vector<double>& vs) {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ", ";
        out += format_double(vs[i]);
    }
    return out;
}

const std::set<std::string>& known_keys(const std::string& section) {
    static const std::map<std::string, std::set<std::string>> keys = {
        { "spin", { "s", "d", "e", "g", "field_direction", "extra_terms" } },
        { "bath", { "channels" } },
        { "grid", { "temperatures", "fields" } },
        { "run", { "basis", "methods", "series_order" } },
        { "tolerances",
          { "pairing_threshold", "overlap_threshold", "self_consistency_tol", "max_iterations",
            "damping", "max_series_order", "series_term_tol" } },
        { "units", { "energy_unit", "temperature_unit", "rate_output" } },
    };
    const auto it = keys.find(section);
    if (it == keys.end()) throw std::runtime_error("config: unknown section [" + section + "]");
    return it->second;
}

const std::set<std::string> kChannelKeys = { "operator", "strength", "density", "alpha",
                                             "cutoff", "table" };

void check_strictly_increasing(const std::string& key, const std::vector<double>& grid) {
    if (grid.empty()) throw std::runtime_error("config: grid '" + key + "' is empty");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) {
            throw std::runtime_error("config: grid '" + key + "' must be strictly increasing");
        }
    }
}

}  // namespace

double boltzmann_constant(const std::string& energy_unit) {
    if (energy_unit == "cm-1") return 0.695034800;
    if (energy_unit == "meV") return 0.0861733326;
    if (energy_unit == "K") return 1.0;
    if (energy_unit == "unitless") return 1.0;
    throw std::runtime_error("config: unknown energy_unit '" + energy_unit + "'");
}

spin::SpinParameters RunConfig::spin_parameters(double field_value) const {
    spin::SpinParameters p;
    p.s = s;
    p.axial = axial;
    p.rhombic = rhombic;
    p.g_factor = g_factor;
    p.field = field_direction * field_value;
    p.extra_terms = extra_terms;
    return p;
}

bath::BathModel RunConfig::bath_model(const spin::SpinOperators& ops) const {
    bath::BathModel model;
    for (const auto& ch : channels) {
        bath::CouplingChannel channel;
        channel.coupling = spin::operator_from_expression(ch.op, ops);
        channel.strength = ch.strength;
        if (ch.density == "debye_cubic") {
            channel.density = bath::SpectralDensity::debye(ch.alpha, ch.cutoff);
        } else if (ch.density == "ohmic") {
            channel.density = bath::SpectralDensity::ohmic(ch.alpha, ch.cutoff);
        } else if (ch.density == "tabulated") {
            channel.density = bath::SpectralDensity::from_table_file(ch.table);
        } else {
            throw std::runtime_error("config: unknown density '" + ch.density + "'");
        }
        model.channels.push_back(std::move(channel));
    }
    return model;
}

double RunConfig::rate_scale() const {
    if (rate_output == "per_energy_unit") return 1.0;
    if (rate_output != "per_second") {
        throw std::runtime_error("config: unknown rate_output '" + rate_output + "'");
    }
    // Angular frequency per energy unit (1/hbar in SI).
    if (energy_unit == "cm-1") return 1.8836515673e11;
    if (energy_unit == "meV") return 1.5192674886e12;
    if (energy_unit == "K") return 1.3099200448e11;
    if (energy_unit == "unitless") return 1.0;
    throw std::runtime_error("config: unknown energy_unit '" + energy_unit + "'");
}

RunConfig load_config(std::istream& in, bool strict) {
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::runtime_error("config: malformed section header at line " +
                                         std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            known_keys(section);  // validates the section name
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: expected key = value at line " + std::to_string(line_no));
        }
        if (section.empty()) {
            throw std::runtime_error("config: key outside any section at line " + std::to_string(line_no));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!sections[section].emplace(key, value).second) {
            throw std::runtime_error("config: duplicate key '" + key + "' in [" + section + "]");
        }
    }

    RunConfig cfg;
    cfg.channels.clear();
    std::vector<std::string> channel_names;
    if (const auto bath_it = sections.find("bath"); bath_it != sections.end()) {
        if (const auto ch_it = bath_it->second.find("channels"); ch_it != bath_it->second.end()) {
            channel_names = split_list(ch_it->second);
        }
    }

    // Strict mode rejects every key that is not recognized.
    for (const auto& [sect, kv] : sections) {
        const auto& known = known_keys(sect);
        for (const auto& [key, value] : kv) {
            (void)value;
            bool ok = known.count(key) > 0;
            if (!ok && sect == "bath") {
                const auto dot = key.find('.');
                if (dot != std::string::npos) {
                    const std::string name = key.substr(0, dot);
                    const std::string field = key.substr(dot + 1);
                    ok = kChannelKeys.count(field) > 0 &&
                         std::find(channel_names.begin(), channel_names.end(), name) !=
                             channel_names.end();
                }
            }
            if (!ok && strict) {
                throw std::runtime_error("config: unknown key '" + key + "' in [" + sect + "]");
            }
            if (!ok) cfg.warnings.push_back("ignoring unknown key '" + key + "' in [" + sect + "]");
        }
    }

    auto get = [&sections](const std::string& sect, const std::string& key,
                           std::string* out) -> bool {
        const auto s_it = sections.find(sect);
        if (s_it == sections.end()) return false;
        const auto k_it = s_it->second.find(key);
        if (k_it == s_it->second.end()) return false;
        *out = k_it->second;
        return true;
    };

    std::string v;
    if (get("units", "energy_unit", &v)) cfg.energy_unit = v;
    if (get("units", "temperature_unit", &v)) cfg.temperature_unit = v;
    if (get("units", "rate_output", &v)) cfg.rate_output = v;
    boltzmann_constant(cfg.energy_unit);  // validates
    if (cfg.temperature_unit != "kelvin" && cfg.temperature_unit != "energy") {
        throw std::runtime_error("config: temperature_unit must be 'kelvin' or 'energy'");
    }

    if (get("spin", "s", &v)) cfg.s = parse_double("s", v);
    if (get("spin", "d", &v)) cfg.axial = parse_double("d", v);
    if (get("spin", "e", &v)) cfg.rhombic = parse_double("e", v);
    if (get("spin", "g", &v)) cfg.g_factor = parse_double("g", v);
    if (get("spin", "field_direction", &v)) {
        const auto xyz = parse_double_list("field_direction", v);
        if (xyz.size() != 3) throw std::runtime_error("config: field_direction needs 3 components");
        cfg.field_direction = Eigen::Vector3d(xyz[0], xyz[1], xyz[2]);
    }
    if (get("spin", "extra_terms", &v)) {
        cfg.extra_terms.clear();
        for (const auto& item : split_list(v)) {
            const auto star = item.find('*');
            if (star == std::string::npos) {
                throw std::runtime_error("config: extra term '" + item + "' must be word*coefficient");
            }
            spin::PolynomialTerm term;
            term.axes = trim(item.substr(0, star));
            term.coefficient = parse_double("extra_terms", trim(item.substr(star + 1)));
            cfg.extra_terms.push_back(std::move(term));
        }
    }

    for (const auto& name : channel_names) {
        ChannelConfig ch;
        ch.name = name;
        if (get("bath", name + ".operator", &v)) ch.op = v;
        if (get("bath", name + ".strength", &v)) ch.strength = parse_double(name + ".strength", v);
        if (get("bath", name + ".density", &v)) ch.density = v;
        if (get("bath", name + ".alpha", &v)) ch.alpha = parse_double(name + ".alpha", v);
        if (get("bath", name + ".cutoff", &v)) ch.cutoff = parse_double(name + ".cutoff", v);
        if (get("bath", name + ".table", &v)) ch.table = v;
        cfg.channels.push_back(std::move(ch));
    }
    if (cfg.channels.empty()) {
        ChannelConfig ch;
        ch.name = "default";
        cfg.channels.push_back(std::move(ch));
    }

    if (get("grid", "temperatures", &v)) cfg.temperatures = parse_double_list("temperatures", v);
    if (cfg.temperatures.empty()) throw std::runtime_error("config: [grid] temperatures is required");
    check_strictly_increasing("temperatures", cfg.temperatures);
    if (cfg.temperature_unit == "kelvin") {
        const double kb = boltzmann_constant(cfg.energy_unit);
        for (double& t : cfg.temperatures) t *= kb;
        cfg.temperature_unit = "energy";
    }
    for (double t : cfg.temperatures) {
        if (t <= 0.0) throw std::runtime_error("config: temperatures must be positive");
    }

    if (get("grid", "fields", &v)) {
        cfg.fields = parse_double_list("fields", v);
    } else {
        cfg.fields = { 0.0 };
    }
    check_strictly_increasing("fields", cfg.fields);

    if (get("run", "basis", &v)) cfg.basis = v;
    if (cfg.basis != "localized" && cfg.basis != "eigen" && cfg.basis != "both") {
        throw std::runtime_error("config: basis must be localized, eigen or both");
    }
    if (get("run", "methods", &v)) cfg.methods = split_list(v);
    if (cfg.methods.empty()) throw std::runtime_error("config: method list is empty");
    static const std::set<std::string> kMethods = { "nonsecular", "semisecular", "reduced",
                                                    "secular_localized", "secular_eigen" };
    for (const auto& m : cfg.methods) {
        if (!kMethods.count(m)) throw std::runtime_error("config: unknown method '" + m + "'");
    }
    if (get("run", "series_order", &v)) {
        if (v != "adaptive") {
            const int order = parse_int("series_order", v);
            if (order < 0) throw std::runtime_error("config: series_order must be >= 0");
        }
        cfg.series_order = v;
    }

    if (get("tolerances", "pairing_threshold", &v)) {
        cfg.pairing_threshold = parse_double("pairing_threshold", v);
    }
    if (get("tolerances", "overlap_threshold", &v)) {
        cfg.overlap_threshold = parse_double("overlap_threshold", v);
    }
    if (get("tolerances", "self_consistency_tol", &v)) {
        cfg.self_consistency_tol = parse_double("self_consistency_tol", v);
    }
    if (get("tolerances", "max_iterations", &v)) cfg.max_iterations = parse_int("max_iterations", v);
    if (get("tolerances", "damping", &v)) cfg.damping = parse_double("damping", v);
    if (get("tolerances", "max_series_order", &v)) {
        cfg.max_series_order = parse_int("max_series_order", v);
    }
    if (get("tolerances", "series_term_tol", &v)) {
        cfg.series_term_tol = parse_double("series_term_tol", v);
    }

    // Hard spin validation plus soft warnings.
    const auto warn = spin::validate(cfg.spin_parameters(cfg.fields.front()));
    cfg.warnings.insert(cfg.warnings.end(), warn.begin(), warn.end());
    return cfg;
}

RunConfig load_config_file(const std::string& path, bool strict) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    return load_config(in, strict);
}

std::string echo_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "[spin]\n";
    os << "s = " << format_double(cfg.s) << "\n";
    os << "d = " << format_double(cfg.axial) << "\n";
    os << "e = " << format_double(cfg.rhombic) << "\n";
    os << "g = " << format_double(cfg.g_factor) << "\n";
    os << "field_direction = " << format_double(cfg.field_direction.x()) << ", "
       << format_double(cfg.field_direction.y()) << ", " << format_double(cfg.field_direction.z())
       << "\n";
    if (!cfg.extra_terms.empty()) {
        os << "extra_terms = ";
        for (std::size_t i = 0; i < cfg.extra_terms.size(); ++i) {
            if (i) os << ", ";
            os << cfg.extra_terms[i].axes << "*" << format_double(cfg.extra_terms[i].coefficient);
        }
        os << "\n";
    }
    os << "\n[bath]\n";
    os << "channels = ";
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        if (i) os << ", ";
        os << cfg.channels[i].name;
    }
    os << "\n";
    for (const auto& ch : cfg.channels) {
        os << ch.name << ".operator = " << ch.op << "\n";
        os << ch.name << ".strength = " << format_double(ch.strength) << "\n";
        os << ch.name << ".density = " << ch.density << "\n";
        if (ch.density == "tabulated") {
            os << ch.name << ".table = " << ch.table << "\n";
        } else {
            os << ch.name << ".alpha = " << format_double(ch.alpha) << "\n";
            os << ch.name << ".cutoff = " << format_double(ch.cutoff) << "\n";
        }
    }
    os << "\n[grid]\n";
    os << "temperatures = " << join_doubles(cfg.temperatures) << "\n";
    os << "fields = " << join_doubles(cfg.fields) << "\n";
    os << "\n[run]\n";
    os << "basis = " << cfg.basis << "\n";
    os << "methods = ";
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
        if (i) os << ", ";
        os << cfg.methods[i];
    }
    os << "\n";
    os << "series_order = " << cfg.series_order << "\n";
    os << "\n[tolerances]\n";
    os << "pairing_threshold = " << format_double(cfg.pairing_threshold) << "\n";
    os << "overlap_threshold = " << format_double(cfg.overlap_threshold) << "\n";
    os << "self_consistency_tol = " << format_double(cfg.self_consistency_tol) << "\n";
    os << "max_iterations = " << cfg.max_iterations << "\n";
    os << "damping = " << format_double(cfg.damping) << "\n";
    os << "max_series_order = " << cfg.max_series_order << "\n";
    os << "series_term_tol = " << format_double(cfg.series_term_tol) << "\n";
    os << "\n[units]\n";
    os << "energy_unit = " << cfg.energy_unit << "\n";
    os << "temperature_unit = energy\n";
    os << "rate_output = " << cfg.rate_output << "\n";
    return os.str();
}

}  // namespace spinrelax::cli
