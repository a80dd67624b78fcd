#pragma once

// Text persistence: 17-digit CSV tables, atomic file writes and the
// instability time-series layout.

#include "kgsim/instability.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgsim {

inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != header.size()) throw std::logic_error("CSV row width does not match the header");
        rows.push_back(std::move(row));
    }

    std::string str() const {
        std::string out;
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += cells[i];
            }
            out += '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out;
    }

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

/// Writes through a sibling temporary and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        f << content;
        f.flush();
        if (!f) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

/// One row per recorded sample; the modulation columns are empty-valued (nan) once tracking stopped.
inline CsvTable instability_timeseries(const InstabilityReport& rep) {
    CsvTable t;
    t.header = {"t",      "Q",        "P",      "E",       "orbit_distance", "sup_u",  "theta",
                "y",      "lambda",   "xi_h1l2", "eta_minus_i_omega_xi_l2", "F1",    "F2",
                "F3",     "exit_flag", "theta_dot", "y_dot", "lambda_dot",  "I",     "I_dot_numeric",
                "I_dot_main", "kinetic", "tail", "virial_residual_first", "virial_residual_second",
                "control_D", "remainder_ratio"};
    const auto f = format_double;
    for (const auto& r : rep.rows) {
        const bool tr = r.tracked;
        const double nan = NAN;
        t.add_row({f(r.t), f(r.conserved.Q), f(r.conserved.P), f(r.conserved.E), f(r.orbit_distance), f(r.sup_u),
                   f(tr ? r.fit.theta : nan), f(tr ? r.fit.y : nan), f(tr ? r.fit.lambda : nan),
                   f(tr ? r.fit.xi_h1l2 : nan), f(tr ? r.fit.eta_minus_i_omega_xi : nan),
                   f(tr ? r.fit.residuals[0] : nan), f(tr ? r.fit.residuals[1] : nan),
                   f(tr ? r.fit.residuals[2] : nan), tr ? "0" : "1", f(r.theta_dot), f(r.y_dot), f(r.lambda_dot),
                   f(r.I), f(r.I_dot_numeric), f(r.I_dot_main), f(r.kinetic), f(r.tail),
                   f(r.virial_residual_first), f(r.virial_residual_second), f(r.control_D),
                   f(r.remainder_ratio)});
    }
    return t;
}

}  // namespace kgsim
