#pragma once

// Scenario configuration: JSON in, validated ScenarioConfig out, and a
// canonical printer such that parse(print(parse(x))) == parse(x).
//
// Dimensionful values are strings with a mandatory unit ("5 K", "1.4 ms",
// "39 Hz/K"). Frequencies are cycle frequencies; the 2 pi factor is applied
// when the simulation inputs are built.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "estimator.hpp"
#include "noise_ensemble.hpp"
#include "response_io.hpp"
#include "response_model.hpp"
#include "sequence_engine.hpp"
#include "sequence_script.hpp"
#include "spin_model.hpp"
#include "units.hpp"

namespace nvecho {

using ordered_json = nlohmann::ordered_json;

inline constexpr const char* data_dir_env = "NVECHO_DATA_DIR";

/// Directory searched for data files referenced by relative path: the
/// NVECHO_DATA_DIR environment variable, else the build-time default.
inline std::string default_data_dir() {
    if (const char* env = std::getenv(data_dir_env); env && *env) return env;
#ifdef NVECHO_DEFAULT_DATA_DIR
    return NVECHO_DEFAULT_DATA_DIR;
#else
    return "data";
#endif
}

/// Resolution order: absolute path, relative to `base_dir`, relative to `data_dir`.
inline std::optional<std::string> resolve_data_file(const std::string& name, const std::string& base_dir,
                                                    const std::string& data_dir) {
    namespace fs = std::filesystem;
    const fs::path p(name);
    if (p.is_absolute()) return fs::exists(p) ? std::optional<std::string>(p.string()) : std::nullopt;
    for (const auto& dir : {base_dir, data_dir}) {
        if (dir.empty()) continue;
        const auto candidate = fs::path(dir) / p;
        if (fs::exists(candidate)) return candidate.string();
    }
    if (base_dir.empty() && fs::exists(p)) return p.string();
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Config types
// ---------------------------------------------------------------------------

/// Either explicit values or an inclusive linear range.
struct GridSpec {
    Dimension dimension = Dimension::dimensionless;
    std::vector<Quantity> values;
    std::optional<Quantity> start;
    std::optional<Quantity> stop;
    std::size_t count = 0;

    /// Values in simulation units (s, K, plain numbers).
    std::vector<double> resolve() const {
        if (!values.empty()) {
            std::vector<double> v;
            for (const auto& q : values) v.push_back(q.internal());
            return v;
        }
        if (!start || !stop) return {};
        return linspace(start->internal(), stop->internal(), count);
    }

    bool operator==(const GridSpec&) const = default;
};

struct SpinSpec {
    Quantity D{2.87e9, Dimension::frequency};
    Quantity Q{-4.945e6, Dimension::frequency};
    Quantity A_zz{-2.16e6, Dimension::frequency};
    Quantity gamma_e{2.8025e6, Dimension::frequency_per_gauss};
    Quantity gamma_n{-307.7, Dimension::frequency_per_gauss};
    Quantity B{239.0, Dimension::field};

    SpinSystemParams params() const {
        return {D.internal(), Q.internal(), A_zz.internal(), gamma_e.internal(), gamma_n.internal(), B.internal()};
    }
    bool operator==(const SpinSpec&) const = default;
};

struct ResponseSpec {
    std::string model = "linear"; // linear | quasiharmonic
    Quantity alpha_Q{39.0, Dimension::frequency_per_kelvin};
    Quantity alpha_A{204.0, Dimension::frequency_per_kelvin};
    /// alpha_Q / alpha_A; when set it replaces alpha_A.
    std::optional<double> ratio;
    Quantity alpha_D{-77.7e3, Dimension::frequency_per_kelvin};
    Quantity dQ_dP{1.60e3, Dimension::frequency_per_gpa};
    Quantity dA_dP{4.33e3, Dimension::frequency_per_gpa};
    Quantity dD_dP{0.0, Dimension::frequency_per_gpa};
    Quantity bulk_modulus{diamond_bulk_modulus_gpa, Dimension::pressure};
    std::string data_file;

    LinearResponse linear() const {
        LinearResponse r;
        r.alpha_Q = alpha_Q.internal();
        r.alpha_A = ratio ? r.alpha_Q / *ratio : alpha_A.internal();
        r.alpha_D = alpha_D.internal();
        r.bulk_modulus = bulk_modulus.value;
        r.set_pressure_slopes(dQ_dP.internal(), dA_dP.internal(), dD_dP.internal());
        return r;
    }
    bool operator==(const ResponseSpec&) const = default;
};

struct NoiseSpec {
    /// temperature | strain | field | residual
    std::string variable = "temperature";
    DistributionKind distribution = DistributionKind::lorentzian;
    Quantity mu{0.0, Dimension::temperature};
    Quantity sigma{0.0, Dimension::temperature};
    /// residual only: coherence time the extra field-like source produces on a
    /// double-quantum (dq_T2) or single-quantum (sq_T2) Ramsey.
    std::optional<Quantity> dq_T2;
    std::optional<Quantity> sq_T2;

    bool operator==(const NoiseSpec&) const = default;
};

struct SeriesSpec {
    std::string label;
    SequenceKind sequence = SequenceKind::ramsey;
    LevelPair pair = sq_minus;
    int ms = 0;
    FlipPairing flip{};
    std::optional<double> tau_over_t;
    /// Take tau/t from the argmax of this sweep instead.
    std::string tau_from_sweep;
    GridSpec t_grid{Dimension::time};
    std::size_t skip_initial = default_skip_initial;

    bool operator==(const SeriesSpec&) const = default;
};

struct SweepSpec {
    std::string label;
    Quantity t{0.0, Dimension::time};
    GridSpec tau_over_t{};
    LevelPair pair = sq_minus;
    FlipPairing flip{};

    bool operator==(const SweepSpec&) const = default;
};

struct RateTableSpec {
    std::string label;
    LevelPair pair = sq_minus;
    FlipPairing flip{};
    GridSpec tau_over_t{};
    GridSpec t_grid{Dimension::time};
    std::string fit = "vee"; // vee | line | none
    bool robust = false;
    std::size_t skip_initial = default_skip_initial;

    bool operator==(const RateTableSpec&) const = default;
};

/// Improvement factor T2(protected) / T2(unprotected) between two series.
struct CompareSpec {
    std::string protected_label;
    std::string unprotected_label;

    bool operator==(const CompareSpec&) const = default;
};

/// A single scripted sequence, optionally read out with a phase sweep.
struct ScriptSpec {
    std::string text;
    std::string file;
    GridSpec phases{};
    double contrast = 1.0;
    double offset = 1.0;

    bool operator==(const ScriptSpec&) const = default;
};

struct OutputSpec {
    std::string directory = "out";
    bool csv = true;
    bool json = true;

    bool operator==(const OutputSpec&) const = default;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::string description;
    SpinSpec spin;
    ResponseSpec response;
    std::vector<NoiseSpec> noise;
    BackendConfig backend;
    std::vector<SeriesSpec> series;
    std::vector<SweepSpec> sweeps;
    std::vector<RateTableSpec> rate_tables;
    std::vector<CompareSpec> compare;
    std::optional<ScriptSpec> script;
    OutputSpec output;
    /// Directory of the config file; used to resolve relative paths. Not printed.
    std::string base_dir;

    bool operator==(const ScenarioConfig& o) const {
        return name == o.name && description == o.description && spin == o.spin && response == o.response &&
               noise == o.noise && backend == o.backend && series == o.series && sweeps == o.sweeps &&
               rate_tables == o.rate_tables && compare == o.compare && script == o.script && output == o.output;
    }
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

/// Collects every problem instead of stopping at the first.
class ConfigReader {
public:
    std::vector<std::string> issues;

    void issue(const std::string& path, const std::string& msg) { issues.push_back(path + ": " + msg); }

    bool object(const ordered_json& j, const std::string& path, std::initializer_list<const char*> allowed) {
        if (!j.is_object()) {
            issue(path, "expected an object");
            return false;
        }
        const std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [k, v] : j.items()) {
            if (!ok.count(k)) issue(path + "." + k, "unknown key");
        }
        return true;
    }

    void quantity(const ordered_json& j, const std::string& path, const char* key, Dimension d, Quantity& out) {
        if (!j.contains(key)) return;
        out = quantity_value(j.at(key), path + "." + key, d).value_or(out);
    }

    std::optional<Quantity> quantity_value(const ordered_json& v, const std::string& path, Dimension d) {
        if (d == Dimension::dimensionless) {
            if (v.is_number()) return Quantity{v.get<double>(), d};
            if (!v.is_string()) {
                issue(path, "expected a number");
                return std::nullopt;
            }
        } else if (!v.is_string()) {
            issue(path, v.is_number() ? "bare number; a unit is required (e.g. \"" + format_number(v.get<double>()) + " " +
                                            std::string(canonical_unit(d)) + "\")"
                                      : "expected a quantity string with unit");
            return std::nullopt;
        }
        try {
            return parse_quantity(v.get<std::string>(), d);
        } catch (const DomainError& e) {
            issue(path, e.what());
            return std::nullopt;
        }
    }

    template <class T>
    void number(const ordered_json& j, const std::string& path, const char* key, T& out) {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
                issue(path + "." + key, "expected a non-negative integer");
                return;
            }
        } else if (!v.is_number()) {
            issue(path + "." + key, "expected a number");
            return;
        }
        out = v.get<T>();
    }

    void string(const ordered_json& j, const std::string& path, const char* key, std::string& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_string()) {
            issue(path + "." + key, "expected a string");
            return;
        }
        out = j.at(key).get<std::string>();
    }

    void boolean(const ordered_json& j, const std::string& path, const char* key, bool& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_boolean()) {
            issue(path + "." + key, "expected true or false");
            return;
        }
        out = j.at(key).get<bool>();
    }

    int quantum(const ordered_json& v, const std::string& path) {
        if (!v.is_number_integer() || !valid_quantum_number(v.get<int>())) {
            issue(path, "expected -1, 0 or +1");
            return 0;
        }
        return v.get<int>();
    }

    void pair(const ordered_json& j, const std::string& path, LevelPair& out) {
        if (!j.contains("pair")) return;
        const auto& v = j.at("pair");
        if (!v.is_array() || v.size() != 2) {
            issue(path + ".pair", "expected [reference, target]");
            return;
        }
        const auto before = issues.size();
        out = {quantum(v[0], path + ".pair[0]"), quantum(v[1], path + ".pair[1]")};
        if (issues.size() == before && out.reference == out.target) issue(path + ".pair", "levels must differ");
    }

    void flip(const ordered_json& j, const std::string& path, FlipPairing& out) {
        if (j.contains("ms_free")) out.ms_free = quantum(j.at("ms_free"), path + ".ms_free");
        if (j.contains("ms_flipped")) out.ms_flipped = quantum(j.at("ms_flipped"), path + ".ms_flipped");
        if (out.ms_free == out.ms_flipped) issue(path, "ms_free and ms_flipped must differ");
    }

    void grid(const ordered_json& j, const std::string& path, const char* key, GridSpec& out, bool required) {
        const std::string p = path + "." + key;
        if (!j.contains(key)) {
            if (required) issue(p, "missing");
            return;
        }
        const auto& v = j.at(key);
        if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (auto q = quantity_value(v[i], p + "[" + std::to_string(i) + "]", out.dimension)) out.values.push_back(*q);
            }
            if (v.empty()) issue(p, "grid is empty");
            return;
        }
        if (!object(v, p, {"start", "stop", "count"})) return;
        if (!v.contains("start") || !v.contains("stop") || !v.contains("count")) {
            issue(p, "range grids need start, stop and count");
            return;
        }
        out.start = quantity_value(v.at("start"), p + ".start", out.dimension);
        out.stop = quantity_value(v.at("stop"), p + ".stop", out.dimension);
        number(v, p, "count", out.count);
        if (out.count == 0) issue(p + ".count", "grid is empty");
        if (out.start && out.stop && out.count > 1 && !(out.stop->value > out.start->value)) {
            issue(p, "stop must exceed start");
        }
    }

    std::optional<SequenceKind> sequence_kind(const std::string& s, const std::string& path) {
        for (auto k : {SequenceKind::ramsey, SequenceKind::dq_ramsey, SequenceKind::nuclear_echo, SequenceKind::unbalanced_echo}) {
            if (to_string(k) == s) return k;
        }
        issue(path, "unknown sequence '" + s + "' (ramsey, dq_ramsey, nuclear_echo, unbalanced_echo)");
        return std::nullopt;
    }
};

inline Dimension noise_dimension(const std::string& variable) {
    if (variable == "temperature") return Dimension::temperature;
    if (variable == "field") return Dimension::field;
    return Dimension::dimensionless;
}

} // namespace detail

/// Parses and validates a scenario. All problems are reported together in one
/// ConfigError before anything is computed.
inline ScenarioConfig parse_scenario(const ordered_json& j, const std::string& base_dir = {},
                                     const std::string& data_dir = default_data_dir()) {
    detail::ConfigReader rd;
    ScenarioConfig cfg;
    cfg.base_dir = base_dir;
    if (!rd.object(j, "config", {"name", "description", "spin", "response", "noise", "backend", "series", "sweeps",
                                 "rate_tables", "compare", "script", "output"})) {
        throw ConfigError(rd.issues);
    }
    rd.string(j, "config", "name", cfg.name);
    rd.string(j, "config", "description", cfg.description);
    if (cfg.name.empty() || cfg.name.find_first_of("/\\") != std::string::npos) rd.issue("config.name", "must be a non-empty file-name-safe string");

    if (j.contains("spin") && rd.object(j.at("spin"), "spin", {"D", "Q", "A_zz", "gamma_e", "gamma_n", "B"})) {
        const auto& s = j.at("spin");
        rd.quantity(s, "spin", "D", Dimension::frequency, cfg.spin.D);
        rd.quantity(s, "spin", "Q", Dimension::frequency, cfg.spin.Q);
        rd.quantity(s, "spin", "A_zz", Dimension::frequency, cfg.spin.A_zz);
        rd.quantity(s, "spin", "gamma_e", Dimension::frequency_per_gauss, cfg.spin.gamma_e);
        rd.quantity(s, "spin", "gamma_n", Dimension::frequency_per_gauss, cfg.spin.gamma_n);
        rd.quantity(s, "spin", "B", Dimension::field, cfg.spin.B);
        try {
            cfg.spin.params().validate();
        } catch (const DomainError& e) {
            rd.issue("spin", e.what());
        }
    }

    if (j.contains("response") && rd.object(j.at("response"), "response", {"model", "alpha_Q", "alpha_A", "ratio", "alpha_D", "dQ_dP",
                                                                            "dA_dP", "dD_dP", "bulk_modulus", "data_file"})) {
        const auto& r = j.at("response");
        auto& rs = cfg.response;
        rd.string(r, "response", "model", rs.model);
        rd.quantity(r, "response", "alpha_Q", Dimension::frequency_per_kelvin, rs.alpha_Q);
        rd.quantity(r, "response", "alpha_A", Dimension::frequency_per_kelvin, rs.alpha_A);
        if (r.contains("ratio")) {
            double v = 0.0;
            rd.number(r, "response", "ratio", v);
            if (!(v > 0.0)) rd.issue("response.ratio", "must be positive");
            if (r.contains("alpha_A")) rd.issue("response", "give either alpha_A or ratio, not both");
            rs.ratio = v;
        }
        rd.quantity(r, "response", "alpha_D", Dimension::frequency_per_kelvin, rs.alpha_D);
        rd.quantity(r, "response", "dQ_dP", Dimension::frequency_per_gpa, rs.dQ_dP);
        rd.quantity(r, "response", "dA_dP", Dimension::frequency_per_gpa, rs.dA_dP);
        rd.quantity(r, "response", "dD_dP", Dimension::frequency_per_gpa, rs.dD_dP);
        rd.quantity(r, "response", "bulk_modulus", Dimension::pressure, rs.bulk_modulus);
        rd.string(r, "response", "data_file", rs.data_file);
        if (!(rs.bulk_modulus.value > 0.0)) rd.issue("response.bulk_modulus", "must be positive");
        if (rs.model == "quasiharmonic") {
            if (rs.data_file.empty()) {
                rd.issue("response.data_file", "required for the quasiharmonic model");
            } else if (!resolve_data_file(rs.data_file, base_dir, data_dir)) {
                rd.issue("response.data_file", "file '" + rs.data_file + "' not found (searched config directory and " +
                                                   (data_dir.empty() ? std::string("<none>") : data_dir) + ")");
            }
        } else if (rs.model != "linear") {
            rd.issue("response.model", "must be 'linear' or 'quasiharmonic'");
        }
    }

    if (j.contains("noise")) {
        if (!j.at("noise").is_array()) rd.issue("noise", "expected a list of sources");
        std::size_t i = 0;
        for (const auto& n : j.at("noise")) {
            const std::string p = "noise[" + std::to_string(i++) + "]";
            if (!rd.object(n, p, {"variable", "distribution", "mu", "sigma", "dq_T2", "sq_T2"})) continue;
            NoiseSpec ns;
            rd.string(n, p, "variable", ns.variable);
            if (ns.variable == "residual") {
                if (n.contains("dq_T2")) ns.dq_T2 = rd.quantity_value(n.at("dq_T2"), p + ".dq_T2", Dimension::time);
                if (n.contains("sq_T2")) ns.sq_T2 = rd.quantity_value(n.at("sq_T2"), p + ".sq_T2", Dimension::time);
                if (n.contains("dq_T2") == n.contains("sq_T2")) rd.issue(p, "residual needs exactly one of dq_T2 or sq_T2");
                for (const auto* T2 : {&ns.dq_T2, &ns.sq_T2}) {
                    if (*T2 && !(T2->value().value > 0.0)) rd.issue(p, "coherence time must be positive");
                }
                for (const char* k : {"distribution", "mu", "sigma"}) {
                    if (n.contains(k)) rd.issue(p + "." + k, "not used by the residual source");
                }
                ns.distribution = DistributionKind::lorentzian;
                ns.mu = ns.sigma = Quantity{0.0, Dimension::field};
                cfg.noise.push_back(ns);
                continue;
            }
            if (ns.variable != "temperature" && ns.variable != "strain" && ns.variable != "field") {
                rd.issue(p + ".variable", "must be temperature, strain, field or residual");
                continue;
            }
            const Dimension d = detail::noise_dimension(ns.variable);
            ns.mu = ns.sigma = Quantity{0.0, d};
            std::string dist = "lorentzian";
            rd.string(n, p, "distribution", dist);
            if (dist == "lorentzian") ns.distribution = DistributionKind::lorentzian;
            else if (dist == "gaussian") ns.distribution = DistributionKind::gaussian;
            else if (dist == "delta") ns.distribution = DistributionKind::delta;
            else rd.issue(p + ".distribution", "'" + dist + "' is not lorentzian, gaussian or delta");
            rd.quantity(n, p, "mu", d, ns.mu);
            if (!n.contains("sigma") && ns.distribution != DistributionKind::delta) rd.issue(p + ".sigma", "missing");
            rd.quantity(n, p, "sigma", d, ns.sigma);
            if (ns.sigma.value < 0.0) rd.issue(p + ".sigma", "must be non-negative");
            if (ns.distribution == DistributionKind::delta && ns.sigma.value != 0.0) rd.issue(p + ".sigma", "delta sources have zero width");
            cfg.noise.push_back(ns);
        }
    }

    if (j.contains("backend") && rd.object(j.at("backend"), "backend", {"type", "samples", "seed", "workers", "truncation_sigmas"})) {
        const auto& b = j.at("backend");
        std::string type = "closed_form";
        rd.string(b, "backend", "type", type);
        if (type == "closed_form") cfg.backend.backend = Backend::closed_form;
        else if (type == "monte_carlo") cfg.backend.backend = Backend::monte_carlo;
        else rd.issue("backend.type", "must be closed_form or monte_carlo");
        rd.number(b, "backend", "samples", cfg.backend.mc.samples);
        rd.number(b, "backend", "seed", cfg.backend.mc.seed);
        rd.number(b, "backend", "workers", cfg.backend.mc.workers);
        rd.number(b, "backend", "truncation_sigmas", cfg.backend.truncation_sigmas);
        if (cfg.backend.mc.samples == 0) rd.issue("backend.samples", "must be at least 1");
        if (!(cfg.backend.truncation_sigmas > 0.0)) rd.issue("backend.truncation_sigmas", "must be positive");
    }
    if (cfg.response.model == "quasiharmonic" && cfg.backend.backend == Backend::closed_form) {
        rd.issue("backend.type", "the quasiharmonic response needs the monte_carlo backend");
    }

    std::set<std::string> labels;
    const auto label = [&](const ordered_json& e, const std::string& p, std::string& out) {
        rd.string(e, p, "label", out);
        if (out.empty() || out.find_first_of("/\\ ") != std::string::npos) rd.issue(p + ".label", "must be a non-empty file-name-safe string");
        else if (!labels.insert(out).second) rd.issue(p + ".label", "duplicate label '" + out + "'");
    };

    std::set<std::string> sweep_labels;
    if (j.contains("sweeps")) {
        std::size_t i = 0;
        for (const auto& e : j.at("sweeps")) {
            const std::string p = "sweeps[" + std::to_string(i++) + "]";
            if (!rd.object(e, p, {"label", "t", "tau_over_t", "pair", "ms_free", "ms_flipped"})) continue;
            SweepSpec s;
            label(e, p, s.label);
            sweep_labels.insert(s.label);
            if (!e.contains("t")) rd.issue(p + ".t", "missing");
            rd.quantity(e, p, "t", Dimension::time, s.t);
            if (e.contains("t") && !(s.t.value > 0.0)) rd.issue(p + ".t", "must be positive");
            rd.grid(e, p, "tau_over_t", s.tau_over_t, true);
            for (double x : s.tau_over_t.resolve()) {
                if (!(x >= 0.0 && x <= 1.0)) {
                    rd.issue(p + ".tau_over_t", "values must lie in [0, 1]");
                    break;
                }
            }
            rd.pair(e, p, s.pair);
            rd.flip(e, p, s.flip);
            cfg.sweeps.push_back(s);
        }
    }

    if (j.contains("series")) {
        std::size_t i = 0;
        for (const auto& e : j.at("series")) {
            const std::string p = "series[" + std::to_string(i++) + "]";
            if (!rd.object(e, p, {"label", "sequence", "pair", "ms", "ms_free", "ms_flipped", "tau_over_t", "tau_from_sweep",
                                  "t_grid", "skip_initial"})) {
                continue;
            }
            SeriesSpec s;
            label(e, p, s.label);
            std::string seq = "ramsey";
            rd.string(e, p, "sequence", seq);
            s.sequence = rd.sequence_kind(seq, p + ".sequence").value_or(SequenceKind::ramsey);
            if (s.sequence == SequenceKind::dq_ramsey) s.pair = dq_pair;
            rd.pair(e, p, s.pair);
            if (e.contains("ms")) s.ms = rd.quantum(e.at("ms"), p + ".ms");
            const auto before_grid = rd.issues.size();
            rd.grid(e, p, "t_grid", s.t_grid, true);
            const bool grid_ok = rd.issues.size() == before_grid;
            const auto ts = s.t_grid.resolve();
            for (std::size_t k = 0; k < ts.size(); ++k) {
                if (!(ts[k] > 0.0) || (k > 0 && !(ts[k] > ts[k - 1]))) {
                    rd.issue(p + ".t_grid", "times must be positive and strictly increasing");
                    break;
                }
            }
            rd.number(e, p, "skip_initial", s.skip_initial);
            if (grid_ok && ts.size() < s.skip_initial + 5) rd.issue(p + ".t_grid", "needs at least skip_initial + 5 points for the decay fit");
            if (s.sequence == SequenceKind::unbalanced_echo) {
                rd.flip(e, p, s.flip);
                if (e.contains("tau_over_t")) {
                    double x = 0.0;
                    rd.number(e, p, "tau_over_t", x);
                    if (!(x >= 0.0 && x <= 1.0)) rd.issue(p + ".tau_over_t", "must lie in [0, 1]");
                    s.tau_over_t = x;
                }
                rd.string(e, p, "tau_from_sweep", s.tau_from_sweep);
                if (s.tau_over_t.has_value() == !s.tau_from_sweep.empty()) {
                    rd.issue(p, "unbalanced_echo needs exactly one of tau_over_t or tau_from_sweep");
                }
                if (!s.tau_from_sweep.empty() && !sweep_labels.count(s.tau_from_sweep)) {
                    rd.issue(p + ".tau_from_sweep", "no sweep labelled '" + s.tau_from_sweep + "'");
                }
                if (e.contains("ms")) rd.issue(p + ".ms", "unbalanced_echo uses ms_free and ms_flipped");
            } else {
                for (const char* k : {"ms_free", "ms_flipped", "tau_over_t", "tau_from_sweep"}) {
                    if (e.contains(k)) rd.issue(p + "." + k, "only used by unbalanced_echo");
                }
            }
            if (s.sequence == SequenceKind::dq_ramsey && !s.pair.is_double_quantum()) rd.issue(p + ".pair", "dq_ramsey tracks the (-1, +1) pair");
            cfg.series.push_back(s);
        }
    }

    if (j.contains("rate_tables")) {
        std::size_t i = 0;
        for (const auto& e : j.at("rate_tables")) {
            const std::string p = "rate_tables[" + std::to_string(i++) + "]";
            if (!rd.object(e, p, {"label", "pair", "ms_free", "ms_flipped", "tau_over_t", "t_grid", "fit", "robust", "skip_initial"})) continue;
            RateTableSpec s;
            label(e, p, s.label);
            rd.pair(e, p, s.pair);
            rd.flip(e, p, s.flip);
            rd.grid(e, p, "tau_over_t", s.tau_over_t, true);
            const auto before_grid = rd.issues.size();
            rd.grid(e, p, "t_grid", s.t_grid, true);
            const bool grid_ok = rd.issues.size() == before_grid;
            rd.string(e, p, "fit", s.fit);
            rd.boolean(e, p, "robust", s.robust);
            rd.number(e, p, "skip_initial", s.skip_initial);
            if (s.fit != "vee" && s.fit != "line" && s.fit != "none") rd.issue(p + ".fit", "must be vee, line or none");
            if (grid_ok && s.t_grid.resolve().size() < s.skip_initial + 5) rd.issue(p + ".t_grid", "needs at least skip_initial + 5 points");
            for (double x : s.tau_over_t.resolve()) {
                if (!(x >= 0.0 && x <= 1.0)) {
                    rd.issue(p + ".tau_over_t", "values must lie in [0, 1]");
                    break;
                }
            }
            cfg.rate_tables.push_back(s);
        }
    }

    if (j.contains("compare")) {
        std::size_t i = 0;
        for (const auto& e : j.at("compare")) {
            const std::string p = "compare[" + std::to_string(i++) + "]";
            if (!rd.object(e, p, {"protected", "unprotected"})) continue;
            CompareSpec c;
            rd.string(e, p, "protected", c.protected_label);
            rd.string(e, p, "unprotected", c.unprotected_label);
            for (const auto* l : {&c.protected_label, &c.unprotected_label}) {
                const bool found = std::any_of(cfg.series.begin(), cfg.series.end(), [&](const auto& s) { return s.label == *l; });
                if (!found) rd.issue(p, "no series labelled '" + *l + "'");
            }
            cfg.compare.push_back(c);
        }
    }

    if (j.contains("script") && rd.object(j.at("script"), "script", {"text", "file", "phases", "contrast", "offset"})) {
        const auto& e = j.at("script");
        ScriptSpec s;
        rd.string(e, "script", "text", s.text);
        rd.string(e, "script", "file", s.file);
        if (s.text.empty() == s.file.empty()) rd.issue("script", "give exactly one of text or file");
        std::string text = s.text;
        if (!s.file.empty()) {
            if (auto path = resolve_data_file(s.file, base_dir, data_dir)) {
                std::ifstream in(*path);
                text.assign(std::istreambuf_iterator<char>(in), {});
            } else {
                rd.issue("script.file", "file '" + s.file + "' not found");
            }
        }
        if (!text.empty()) {
            try {
                parse_sequence_script(text);
            } catch (const ParseError& err) {
                rd.issue("script", err.what());
            }
        }
        rd.grid(e, "script", "phases", s.phases, false);
        rd.number(e, "script", "contrast", s.contrast);
        rd.number(e, "script", "offset", s.offset);
        cfg.script = s;
    }

    if (j.contains("output") && rd.object(j.at("output"), "output", {"directory", "formats"})) {
        const auto& o = j.at("output");
        rd.string(o, "output", "directory", cfg.output.directory);
        if (o.contains("formats")) {
            cfg.output.csv = cfg.output.json = false;
            for (const auto& f : o.at("formats")) {
                if (f == "csv") cfg.output.csv = true;
                else if (f == "json") cfg.output.json = true;
                else rd.issue("output.formats", "formats are csv and json");
            }
        }
    }

    if (cfg.series.empty() && cfg.sweeps.empty() && cfg.rate_tables.empty() && !cfg.script) {
        rd.issue("config", "nothing to run: add series, sweeps, rate_tables or script");
    }
    if (!rd.issues.empty()) throw ConfigError(rd.issues);
    return cfg;
}

inline ScenarioConfig load_scenario_file(const std::string& path, const std::string& data_dir = default_data_dir()) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config '" + path + "'");
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError({path + ": " + e.what()});
    }
    return parse_scenario(j, std::filesystem::path(path).parent_path().string(), data_dir);
}

// ---------------------------------------------------------------------------
// Canonical printing
// ---------------------------------------------------------------------------

namespace detail {

inline ordered_json quantity_json(const Quantity& q) {
    if (q.dimension == Dimension::dimensionless) return q.value;
    return format_quantity(q);
}

inline ordered_json grid_json(const GridSpec& g) {
    if (!g.values.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& q : g.values) a.push_back(quantity_json(q));
        return a;
    }
    ordered_json o;
    if (g.start) o["start"] = quantity_json(*g.start);
    if (g.stop) o["stop"] = quantity_json(*g.stop);
    o["count"] = g.count;
    return o;
}

inline ordered_json pair_json(const LevelPair& p) { return ordered_json::array({p.reference, p.target}); }

} // namespace detail

inline ordered_json scenario_to_json(const ScenarioConfig& c) {
    using detail::quantity_json;
    ordered_json j;
    j["name"] = c.name;
    if (!c.description.empty()) j["description"] = c.description;
    j["spin"] = {{"D", quantity_json(c.spin.D)},           {"Q", quantity_json(c.spin.Q)},
                 {"A_zz", quantity_json(c.spin.A_zz)},     {"gamma_e", quantity_json(c.spin.gamma_e)},
                 {"gamma_n", quantity_json(c.spin.gamma_n)}, {"B", quantity_json(c.spin.B)}};
    ordered_json r;
    r["model"] = c.response.model;
    r["alpha_Q"] = quantity_json(c.response.alpha_Q);
    if (c.response.ratio) r["ratio"] = *c.response.ratio;
    else r["alpha_A"] = quantity_json(c.response.alpha_A);
    r["alpha_D"] = quantity_json(c.response.alpha_D);
    r["dQ_dP"] = quantity_json(c.response.dQ_dP);
    r["dA_dP"] = quantity_json(c.response.dA_dP);
    r["dD_dP"] = quantity_json(c.response.dD_dP);
    r["bulk_modulus"] = quantity_json(c.response.bulk_modulus);
    if (!c.response.data_file.empty()) r["data_file"] = c.response.data_file;
    j["response"] = r;

    ordered_json noise = ordered_json::array();
    for (const auto& n : c.noise) {
        ordered_json e;
        e["variable"] = n.variable;
        if (n.variable == "residual") {
            if (n.dq_T2) e["dq_T2"] = quantity_json(*n.dq_T2);
            if (n.sq_T2) e["sq_T2"] = quantity_json(*n.sq_T2);
        } else {
            e["distribution"] = to_string(n.distribution);
            e["mu"] = quantity_json(n.mu);
            e["sigma"] = quantity_json(n.sigma);
        }
        noise.push_back(e);
    }
    j["noise"] = noise;

    ordered_json b;
    b["type"] = to_string(c.backend.backend);
    b["samples"] = c.backend.mc.samples;
    b["seed"] = c.backend.mc.seed;
    b["workers"] = c.backend.mc.workers;
    b["truncation_sigmas"] = c.backend.truncation_sigmas;
    j["backend"] = b;

    if (!c.sweeps.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& s : c.sweeps) {
            ordered_json e;
            e["label"] = s.label;
            e["t"] = quantity_json(s.t);
            e["tau_over_t"] = detail::grid_json(s.tau_over_t);
            e["pair"] = detail::pair_json(s.pair);
            e["ms_free"] = s.flip.ms_free;
            e["ms_flipped"] = s.flip.ms_flipped;
            a.push_back(e);
        }
        j["sweeps"] = a;
    }
    if (!c.series.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& s : c.series) {
            ordered_json e;
            e["label"] = s.label;
            e["sequence"] = to_string(s.sequence);
            e["pair"] = detail::pair_json(s.pair);
            if (s.sequence == SequenceKind::unbalanced_echo) {
                e["ms_free"] = s.flip.ms_free;
                e["ms_flipped"] = s.flip.ms_flipped;
                if (s.tau_over_t) e["tau_over_t"] = *s.tau_over_t;
                if (!s.tau_from_sweep.empty()) e["tau_from_sweep"] = s.tau_from_sweep;
            } else {
                e["ms"] = s.ms;
            }
            e["t_grid"] = detail::grid_json(s.t_grid);
            e["skip_initial"] = s.skip_initial;
            a.push_back(e);
        }
        j["series"] = a;
    }
    if (!c.rate_tables.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& s : c.rate_tables) {
            ordered_json e;
            e["label"] = s.label;
            e["pair"] = detail::pair_json(s.pair);
            e["ms_free"] = s.flip.ms_free;
            e["ms_flipped"] = s.flip.ms_flipped;
            e["tau_over_t"] = detail::grid_json(s.tau_over_t);
            e["t_grid"] = detail::grid_json(s.t_grid);
            e["fit"] = s.fit;
            e["robust"] = s.robust;
            e["skip_initial"] = s.skip_initial;
            a.push_back(e);
        }
        j["rate_tables"] = a;
    }
    if (!c.compare.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& s : c.compare) a.push_back({{"protected", s.protected_label}, {"unprotected", s.unprotected_label}});
        j["compare"] = a;
    }
    if (c.script) {
        ordered_json e;
        if (!c.script->text.empty()) e["text"] = c.script->text;
        if (!c.script->file.empty()) e["file"] = c.script->file;
        if (!c.script->phases.values.empty() || c.script->phases.start) e["phases"] = detail::grid_json(c.script->phases);
        e["contrast"] = c.script->contrast;
        e["offset"] = c.script->offset;
        j["script"] = e;
    }
    ordered_json formats = ordered_json::array();
    if (c.output.csv) formats.push_back("csv");
    if (c.output.json) formats.push_back("json");
    j["output"] = {{"directory", c.output.directory}, {"formats", formats}};
    return j;
}

} // namespace nvecho
