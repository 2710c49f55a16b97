#pragma once

// Executes a ScenarioConfig: decay series with T2 fits, pulse-location sweeps,
// rate tables with V / line fits, and scripted sequences; writes CSV/JSON
// artifacts and a summary.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "estimator.hpp"
#include "response_io.hpp"
#include "sequence_engine.hpp"
#include "sequence_script.hpp"
#include "signal_io.hpp"

namespace nvecho {

inline Ensemble build_ensemble(const ScenarioConfig& c, const std::string& data_dir = default_data_dir()) {
    Ensemble e;
    e.params = c.spin.params();
    e.response.linear = c.response.linear();
    e.response.gamma_n = e.params.gamma_n;
    if (c.response.model == "quasiharmonic") {
        const auto path = resolve_data_file(c.response.data_file, c.base_dir, data_dir);
        if (!path) throw UsageError("response data file '" + c.response.data_file + "' not found");
        e.response.quasiharmonic = load_quasiharmonic_file(*path);
    }
    for (const auto& n : c.noise) {
        if (n.variable == "residual") {
            const double rate = n.dq_T2 ? 1.0 / (2.0 * n.dq_T2->value) : 1.0 / n.sq_T2->value;
            e.sources.push_back(residual_field_source(rate, e.params.gamma_n));
            continue;
        }
        NoiseVariable v = NoiseVariable::temperature;
        if (n.variable == "strain") v = NoiseVariable::strain;
        if (n.variable == "field") v = NoiseVariable::field;
        Distribution d{n.distribution, n.mu.internal(), n.sigma.internal()};
        d.validate();
        e.sources.push_back({v, d});
    }
    return e;
}

/// Probability mass removed by the Cauchy truncation, per source (zero when
/// no truncation applies).
inline std::vector<double> truncation_report(const Ensemble& e, const BackendConfig& b) {
    std::vector<double> out;
    for (const auto& s : e.sources) {
        const auto cut = b.backend == Backend::monte_carlo ? detail::truncation_for(s, e.response, b.truncation_sigmas) : std::nullopt;
        out.push_back(cut ? truncated_mass(s.dist, *cut) : 0.0);
    }
    return out;
}

struct SeriesResult {
    SeriesSpec spec;
    double tau_over_t = 0.0;
    EnsembleSignal signal;
    std::optional<FitResult> fit;
    std::string fit_error;
};

struct SweepResult {
    SweepSpec spec;
    EnsembleSignal signal;
    double argmax_tau_over_t = 0.0;
    double peak_amplitude = 0.0;
};

struct RateTableResult {
    RateTableSpec spec;
    RateTable table;
    std::optional<FitResult> fit;
    std::string fit_error;
};

struct CompareResult {
    CompareSpec spec;
    std::optional<double> improvement;
};

struct ScriptResult {
    PulseSequence sequence;
    AmplitudeResult amplitude;
    std::optional<EnsembleSignal> phase_signal;
    std::optional<FitResult> cosine;
};

struct ScenarioResult {
    std::string name;
    std::string description;
    std::vector<SweepResult> sweeps;
    std::vector<SeriesResult> series;
    std::vector<RateTableResult> rate_tables;
    std::vector<CompareResult> compare;
    std::optional<ScriptResult> script;
    std::vector<double> truncated_mass;

    const SeriesResult* find_series(const std::string& label) const {
        for (const auto& s : series) {
            if (s.spec.label == label) return &s;
        }
        return nullptr;
    }
    const SweepResult* find_sweep(const std::string& label) const {
        for (const auto& s : sweeps) {
            if (s.spec.label == label) return &s;
        }
        return nullptr;
    }
    const RateTableResult* find_rate_table(const std::string& label) const {
        for (const auto& s : rate_tables) {
            if (s.spec.label == label) return &s;
        }
        return nullptr;
    }
};

struct RunSections {
    bool series = true;
    bool sweeps = true;
    bool rate_tables = true;
    bool script = true;

    static RunSections all() { return {}; }
};

inline std::string pair_text(const LevelPair& p) { return std::to_string(p.reference) + "," + std::to_string(p.target); }

inline SequenceFamily series_family(const SeriesSpec& s, double tau_over_t) {
    switch (s.sequence) {
    case SequenceKind::ramsey: return ramsey_family(s.pair, s.ms);
    case SequenceKind::dq_ramsey: return dq_ramsey_family(s.ms);
    case SequenceKind::nuclear_echo: return nuclear_echo_family(s.pair, s.ms);
    case SequenceKind::unbalanced_echo: return unbalanced_echo_family(tau_over_t, s.pair, s.flip);
    }
    throw DomainError("unknown sequence kind");
}

inline ScenarioResult run_scenario(const ScenarioConfig& cfg, const RunSections& sections = {},
                                   const std::string& data_dir = default_data_dir()) {
    const Ensemble ens = build_ensemble(cfg, data_dir);
    const BackendConfig& b = cfg.backend;
    ScenarioResult out;
    out.name = cfg.name;
    out.description = cfg.description;
    out.truncated_mass = truncation_report(ens, b);

    // Sweeps run whenever a requested series depends on one.
    const auto sweep_needed = [&](const std::string& label) {
        if (sections.sweeps) return true;
        if (!sections.series) return false;
        return std::any_of(cfg.series.begin(), cfg.series.end(), [&](const auto& s) { return s.tau_from_sweep == label; });
    };
    for (const auto& s : cfg.sweeps) {
        if (!sweep_needed(s.label)) continue;
        SweepResult r;
        r.spec = s;
        const auto grid = s.tau_over_t.resolve();
        r.signal = pulse_location_sweep(s.t.value, grid, s.pair, s.flip, ens, b);
        r.signal.set_meta("label", s.label);
        const auto k = argmax(r.signal.values);
        r.argmax_tau_over_t = grid[k];
        r.peak_amplitude = r.signal.values[k];
        r.signal.set_meta("argmax_tau_over_t", format_number(r.argmax_tau_over_t));
        out.sweeps.push_back(std::move(r));
    }

    if (sections.series) {
        for (const auto& s : cfg.series) {
            SeriesResult r;
            r.spec = s;
            if (s.sequence == SequenceKind::unbalanced_echo) {
                if (s.tau_over_t) {
                    r.tau_over_t = *s.tau_over_t;
                } else {
                    const auto* sw = out.find_sweep(s.tau_from_sweep);
                    if (!sw) throw UsageError("series '" + s.label + "' needs sweep '" + s.tau_from_sweep + "'");
                    r.tau_over_t = sw->argmax_tau_over_t;
                }
            }
            r.signal = decay_scan(s.t_grid.resolve(), series_family(s, r.tau_over_t), ens, b);
            r.signal.set_meta("label", s.label);
            r.signal.set_meta("pair", pair_text(s.pair));
            if (s.sequence == SequenceKind::unbalanced_echo) {
                r.signal.set_meta("ms", std::to_string(s.flip.ms_free) + "->" + std::to_string(s.flip.ms_flipped));
                r.signal.set_meta("tau_over_t", format_number(r.tau_over_t));
            } else {
                r.signal.set_meta("ms", std::to_string(s.ms));
            }
            try {
                r.fit = fit_exponential(r.signal.axis, r.signal.values, s.skip_initial);
            } catch (const FitError& e) {
                r.fit_error = e.what();
            }
            out.series.push_back(std::move(r));
        }
        for (const auto& c : cfg.compare) {
            CompareResult r{c, std::nullopt};
            const auto* p = out.find_series(c.protected_label);
            const auto* u = out.find_series(c.unprotected_label);
            if (p && u && p->fit && u->fit) r.improvement = p->fit->get("T2") / u->fit->get("T2");
            out.compare.push_back(r);
        }
    }

    if (sections.rate_tables) {
        for (const auto& s : cfg.rate_tables) {
            RateTableResult r;
            r.spec = s;
            const auto ts = s.t_grid.resolve();
            const auto xs = s.tau_over_t.resolve();
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const auto scan = decay_scan(ts, unbalanced_echo_family(xs[i], s.pair, s.flip), ens, derived_backend(b, 1000003 * (i + 1)));
                const double rate = 1.0 / fit_exponential(scan.axis, scan.values, s.skip_initial).get("T2");
                r.table.rows.push_back({s.pair, s.flip, xs[i], rate});
            }
            try {
                if (s.fit == "vee") r.fit = fit_vee(r.table, VeeOptions{s.robust});
                else if (s.fit == "line") r.fit = fit_line_intercept(r.table.tau_over_t(), r.table.rates());
            } catch (const FitError& e) {
                r.fit_error = e.what();
            }
            out.rate_tables.push_back(std::move(r));
        }
    }

    if (sections.script && cfg.script) {
        std::string text = cfg.script->text;
        if (!cfg.script->file.empty()) {
            const auto path = resolve_data_file(cfg.script->file, cfg.base_dir, data_dir);
            if (!path) throw UsageError("script file '" + cfg.script->file + "' not found");
            std::ifstream in(*path);
            text.assign(std::istreambuf_iterator<char>(in), {});
        }
        ScriptResult r;
        r.sequence = parse_sequence_script(text);
        r.amplitude = simulate_amplitude(r.sequence, ens, b);
        const auto phases = cfg.script->phases.resolve();
        if (!phases.empty()) {
            r.phase_signal = phase_sweep(r.sequence, ens, phases, cfg.script->contrast, cfg.script->offset, b);
            r.phase_signal->set_meta("label", "script");
            if (phases.size() >= 4) {
                try {
                    r.cosine = fit_cosine(r.phase_signal->axis, r.phase_signal->values);
                } catch (const FitError&) {
                }
            }
        }
        out.script = std::move(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

inline ordered_json summary_json(const ScenarioResult& r) {
    ordered_json j;
    j["name"] = r.name;
    if (!r.description.empty()) j["description"] = r.description;
    if (!r.sweeps.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& s : r.sweeps) {
            a.push_back({{"label", s.spec.label},
                         {"t_s", s.spec.t.value},
                         {"pair", detail::pair_json(s.spec.pair)},
                         {"ms_free", s.spec.flip.ms_free},
                         {"ms_flipped", s.spec.flip.ms_flipped},
                         {"argmax_tau_over_t", s.argmax_tau_over_t},
                         {"peak_amplitude", s.peak_amplitude}});
        }
        j["sweeps"] = a;
    }
    if (!r.series.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& s : r.series) {
            ordered_json e;
            e["label"] = s.spec.label;
            e["sequence"] = to_string(s.spec.sequence);
            e["pair"] = detail::pair_json(s.spec.pair);
            if (s.spec.sequence == SequenceKind::unbalanced_echo) {
                e["ms_free"] = s.spec.flip.ms_free;
                e["ms_flipped"] = s.spec.flip.ms_flipped;
                e["tau_over_t"] = s.tau_over_t;
            } else {
                e["ms"] = s.spec.ms;
            }
            if (s.fit) {
                e["T2_s"] = s.fit->get("T2");
                e["fit"] = to_json(*s.fit);
            } else {
                e["fit_error"] = s.fit_error;
            }
            a.push_back(e);
        }
        j["series"] = a;
    }
    if (!r.compare.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& c : r.compare) {
            ordered_json e{{"protected", c.spec.protected_label}, {"unprotected", c.spec.unprotected_label}};
            e["improvement"] = c.improvement ? ordered_json(*c.improvement) : ordered_json(nullptr);
            a.push_back(e);
        }
        j["compare"] = a;
    }
    if (!r.rate_tables.empty()) {
        ordered_json a = ordered_json::array();
        for (const auto& t : r.rate_tables) {
            ordered_json e;
            e["label"] = t.spec.label;
            e["pair"] = detail::pair_json(t.spec.pair);
            e["fit_model"] = t.spec.fit;
            if (t.fit) {
                if (t.spec.fit == "vee") e["ratio"] = t.fit->get("ratio");
                if (t.spec.fit == "line") e["x_intercept"] = t.fit->get("x_intercept");
                e["fit"] = to_json(*t.fit);
            } else if (!t.fit_error.empty()) {
                e["fit_error"] = t.fit_error;
            }
            a.push_back(e);
        }
        j["rate_tables"] = a;
    }
    if (r.script) {
        ordered_json e;
        e["sequence"] = to_string(r.script->sequence.kind);
        e["canonical_script"] = print_sequence_script(r.script->sequence);
        e["amplitude"] = r.script->amplitude.amplitude();
        e["static_phase_rad"] = r.script->amplitude.static_phase;
        if (r.script->cosine) e["cosine_fit"] = to_json(*r.script->cosine);
        j["script"] = e;
    }
    j["truncated_mass"] = r.truncated_mass;
    return j;
}

namespace detail {

inline std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string short_time(double seconds) {
    if (std::abs(seconds) < 1e-3) return short_number(seconds * 1e6) + " us";
    if (std::abs(seconds) < 1.0) return short_number(seconds * 1e3) + " ms";
    return short_number(seconds) + " s";
}

} // namespace detail

/// One line: scenario name and the key fitted numbers.
inline std::string summary_line(const ScenarioResult& r) {
    std::vector<std::string> parts;
    for (const auto& s : r.sweeps) parts.push_back(s.spec.label + " argmax tau/t=" + detail::short_number(s.argmax_tau_over_t));
    for (const auto& s : r.series) {
        parts.push_back(s.spec.label + " T2=" + (s.fit ? detail::short_time(s.fit->get("T2")) : std::string("fit failed")));
    }
    for (const auto& c : r.compare) {
        parts.push_back("improvement " + c.spec.protected_label + "/" + c.spec.unprotected_label + "=" +
                        (c.improvement ? detail::short_number(*c.improvement) : std::string("n/a")));
    }
    for (const auto& t : r.rate_tables) {
        if (t.fit && t.spec.fit == "vee") parts.push_back(t.spec.label + " ratio=" + detail::short_number(t.fit->get("ratio")));
        else if (t.fit && t.spec.fit == "line") parts.push_back(t.spec.label + " x-intercept=" + detail::short_number(t.fit->get("x_intercept")));
        else if (!t.fit_error.empty()) parts.push_back(t.spec.label + " fit failed");
    }
    if (r.script) parts.push_back("script amplitude=" + detail::short_number(r.script->amplitude.amplitude()));
    double worst = 0.0;
    for (double m : r.truncated_mass) worst = std::max(worst, m);
    if (worst > 0.0) parts.push_back("truncated mass=" + detail::short_number(worst));
    std::string line = r.name + ":";
    for (std::size_t i = 0; i < parts.size(); ++i) line += (i == 0 ? " " : "; ") + parts[i];
    return line;
}

struct WriteOptions {
    bool csv = true;
    bool json = true;
    bool deterministic = false;
};

/// Writes every artifact into `dir` and returns the paths written.
inline std::vector<std::string> write_scenario_outputs(const ScenarioResult& r, const std::string& dir, const WriteOptions& opt) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> written;
    const auto open = [&](const std::string& file) {
        const auto path = (fs::path(dir) / file).string();
        std::ofstream os(path, std::ios::binary);
        if (!os) throw UsageError("cannot write '" + path + "'");
        written.push_back(path);
        return os;
    };
    const CsvOptions csv{opt.deterministic};
    const auto signal = [&](const std::string& label, const EnsembleSignal& sig, const std::optional<FitResult>& fit) {
        if (opt.csv) {
            auto os = open(label + ".csv");
            write_signal_csv(os, sig, csv);
        }
        if (opt.json) {
            auto j = to_json(sig);
            if (fit) j["fit"] = to_json(*fit);
            auto os = open(label + ".json");
            os << dump_json(j);
        }
    };
    for (const auto& s : r.sweeps) signal(s.spec.label, s.signal, std::nullopt);
    for (const auto& s : r.series) signal(s.spec.label, s.signal, s.fit);
    for (const auto& t : r.rate_tables) {
        if (opt.csv) {
            auto os = open(t.spec.label + ".csv");
            write_rate_table_csv(os, t.table, {{"scenario", r.name}, {"label", t.spec.label}, {"fit", t.spec.fit}}, csv);
        }
        if (opt.json && t.fit) {
            auto os = open(t.spec.label + "_fit.json");
            os << dump_json(to_json(*t.fit));
        }
    }
    if (r.script && r.script->phase_signal) signal("script_phase", *r.script->phase_signal, r.script->cosine);
    if (opt.json) {
        auto os = open("summary.json");
        os << dump_json(summary_json(r));
    }
    return written;
}

} // namespace nvecho
