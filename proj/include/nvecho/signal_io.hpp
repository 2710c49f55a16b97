#pragma once

// CSV and JSON serialization of signals, rate tables and fit results.
//
// CSV layout: `# key: value` metadata lines, one header line, then rows. Numbers
// use the shortest round-trip decimal form with '.' as separator.

#include <chrono>
#include <ctime>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "estimator.hpp"
#include "sequence_engine.hpp"
#include "units.hpp"

namespace nvecho {

using ordered_json = nlohmann::ordered_json;

struct CsvOptions {
    /// Omit the `# generated:` timestamp line.
    bool deterministic = false;
};

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace detail {

inline void write_metadata(std::ostream& os, const std::vector<std::pair<std::string, std::string>>& meta,
                           const CsvOptions& opt) {
    for (const auto& [k, v] : meta) os << "# " << k << ": " << v << '\n';
    if (!opt.deterministic) os << "# generated: " << utc_timestamp() << '\n';
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_cell(const std::string& cell, std::size_t line) {
    double v = 0.0;
    const auto t = std::string(detail::trim(cell));
    if (t.empty() || parse_number_prefix(t, v) != t.size()) {
        throw ParseError("not a number: '" + cell + "'", line, 1);
    }
    return v;
}

} // namespace detail

inline void write_signal_csv(std::ostream& os, const EnsembleSignal& sig, const CsvOptions& opt = {}) {
    sig.validate();
    detail::write_metadata(os, sig.metadata, opt);
    os << sig.axis_name << ',' << sig.value_name << '\n';
    for (std::size_t i = 0; i < sig.axis.size(); ++i) {
        os << format_number(sig.axis[i]) << ',' << format_number(sig.values[i]) << '\n';
    }
}

/// Reads the two-column schema written by write_signal_csv. Metadata lines of
/// the form `# key: value` are kept; other comments are ignored.
inline EnsembleSignal read_signal_csv(std::istream& is) {
    EnsembleSignal sig;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        if (line.front() == '#') {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                const auto key = std::string(detail::trim(std::string_view(line).substr(1, colon - 1)));
                const auto value = std::string(detail::trim(std::string_view(line).substr(colon + 1)));
                if (key != "generated" && !key.empty()) sig.set_meta(key, value);
            }
            continue;
        }
        const auto cells = detail::split(line, ',');
        if (!header) {
            if (cells.size() != 2) throw ParseError("expected a two-column header", lineno, 1);
            sig.axis_name = std::string(detail::trim(cells[0]));
            sig.value_name = std::string(detail::trim(cells[1]));
            header = true;
            continue;
        }
        if (cells.size() != 2) throw ParseError("expected 2 columns, found " + std::to_string(cells.size()), lineno, 1);
        sig.axis.push_back(detail::parse_cell(cells[0], lineno));
        sig.values.push_back(detail::parse_cell(cells[1], lineno));
    }
    if (!header) throw ParseError("missing CSV header", lineno, 1);
    sig.validate();
    return sig;
}

inline ordered_json to_json(const EnsembleSignal& sig) {
    ordered_json j;
    j["axis_name"] = sig.axis_name;
    j["value_name"] = sig.value_name;
    ordered_json meta = ordered_json::object();
    for (const auto& [k, v] : sig.metadata) meta[k] = v;
    j["metadata"] = meta;
    j["axis"] = sig.axis;
    j["values"] = sig.values;
    return j;
}

inline ordered_json to_json(const FitResult& fit) {
    ordered_json j;
    j["model"] = fit.model;
    ordered_json params = ordered_json::object();
    for (const auto& [k, v] : fit.parameters) params[k] = v;
    j["parameters"] = params;
    ordered_json sd = ordered_json::object();
    for (const auto& [k, v] : fit.parameters) sd[k] = fit.stddev(k);
    j["stddev"] = sd;
    ordered_json cov = ordered_json::array();
    for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) row.push_back(fit.covariance(r, c));
        cov.push_back(row);
    }
    j["covariance"] = cov;
    j["residual_norm"] = fit.residual_norm;
    j["points_used"] = fit.points_used;
    if (fit.model == "exponential") j["skip_initial"] = fit.skip_initial;
    j["flags"] = fit.flags;
    return j;
}

inline void write_rate_table_csv(std::ostream& os, const RateTable& table,
                                 const std::vector<std::pair<std::string, std::string>>& meta, const CsvOptions& opt = {}) {
    detail::write_metadata(os, meta, opt);
    os << "pair_reference,pair_target,ms_free,ms_flipped,tau_over_t,rate_per_s\n";
    for (const auto& r : table.rows) {
        os << r.pair.reference << ',' << r.pair.target << ',' << r.ms.ms_free << ',' << r.ms.ms_flipped << ','
           << format_number(r.tau_over_t) << ',' << format_number(r.rate) << '\n';
    }
}

inline RateTable read_rate_table_csv(std::istream& is) {
    RateTable table;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty() || line.front() == '#') continue;
        const auto cells = detail::split(line, ',');
        if (!header) {
            if (cells.size() != 6) throw ParseError("expected the six-column rate table header", lineno, 1);
            header = true;
            continue;
        }
        if (cells.size() != 6) throw ParseError("expected 6 columns, found " + std::to_string(cells.size()), lineno, 1);
        RateRow row;
        row.pair = {static_cast<int>(detail::parse_cell(cells[0], lineno)), static_cast<int>(detail::parse_cell(cells[1], lineno))};
        row.ms = {static_cast<int>(detail::parse_cell(cells[2], lineno)), static_cast<int>(detail::parse_cell(cells[3], lineno))};
        row.tau_over_t = detail::parse_cell(cells[4], lineno);
        row.rate = detail::parse_cell(cells[5], lineno);
        table.rows.push_back(row);
    }
    if (!header) throw ParseError("missing CSV header", lineno, 1);
    return table;
}

/// Two-space indented JSON with a trailing newline.
inline std::string dump_json(const ordered_json& j) { return j.dump(2) + "\n"; }

} // namespace nvecho
