#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "nvecho/nvecho.hpp"

namespace {

using namespace nvecho;

constexpr const char* config_dir_env = "NVECHO_CONFIG_DIR";

std::string default_config_dir() {
    if (const char* env = std::getenv(config_dir_env); env && *env) return env;
#ifdef NVECHO_DEFAULT_CONFIG_DIR
    return NVECHO_DEFAULT_CONFIG_DIR;
#else
    return "configs/reproduce";
#endif
}

struct GlobalOptions {
    std::string out;
    std::string data_dir;
    std::string config_dir;
    bool deterministic = false;
    int workers = -1;
    long long seed = -1;
    long long samples = -1;
    bool quiet = false;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void apply_overrides(ScenarioConfig& cfg, const GlobalOptions& g) {
    if (g.workers >= 0) cfg.backend.mc.workers = static_cast<unsigned>(g.workers);
    if (g.seed >= 0) cfg.backend.mc.seed = static_cast<std::uint64_t>(g.seed);
    if (g.samples > 0) cfg.backend.mc.samples = static_cast<std::size_t>(g.samples);
    if (!g.out.empty()) cfg.output.directory = g.out;
}

int run_config(const std::string& path, const GlobalOptions& g, const RunSections& sections) {
    auto cfg = load_scenario_file(path, g.data_dir);
    apply_overrides(cfg, g);
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = run_scenario(cfg, sections, g.data_dir);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto files = write_scenario_outputs(result, cfg.output.directory, {cfg.output.csv, cfg.output.json, g.deterministic});
    std::cout << summary_line(result);
    if (!g.deterministic) std::cout << " [" << detail::short_number(elapsed) << " s]";
    std::cout << '\n';
    if (!g.quiet) {
        for (const auto& f : files) std::cerr << "wrote " << f << '\n';
    }
    for (const auto& s : result.series) {
        if (!s.fit_error.empty()) std::cerr << "warning: series '" << s.spec.label << "': " << s.fit_error << '\n';
    }
    for (const auto& t : result.rate_tables) {
        if (!t.fit_error.empty()) std::cerr << "warning: rate table '" << t.spec.label << "': " << t.fit_error << '\n';
    }
    return 0;
}

/// Two-column signal or six-column rate table, by header width.
bool is_rate_table(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        return std::count(line.begin(), line.end(), ',') == 5;
    }
    return false;
}

int run_fit(const std::string& path, const std::string& model, std::size_t skip, bool robust, const std::string& out) {
    const std::string text = read_text(path);
    std::istringstream in(text);
    std::vector<double> x, y;
    if (is_rate_table(text)) {
        const auto table = read_rate_table_csv(in);
        x = table.tau_over_t();
        y = table.rates();
    } else {
        const auto sig = read_signal_csv(in);
        x = sig.axis;
        y = sig.values;
    }
    FitResult fit;
    if (model == "exponential") fit = fit_exponential(x, y, skip);
    else if (model == "cosine") fit = fit_cosine(x, y);
    else if (model == "vee") fit = fit_vee(x, y, VeeOptions{robust});
    else if (model == "line") fit = fit_line_intercept(x, y);
    else throw UsageError("unknown model '" + model + "'");
    auto j = to_json(fit);
    if (model != "exponential") j.erase("skip_initial");
    const std::string body = dump_json(j);
    if (out.empty()) {
        std::cout << body;
    } else {
        std::ofstream os(out, std::ios::binary);
        if (!os) throw UsageError("cannot write '" + out + "'");
        os << body;
        std::cerr << "wrote " << out << '\n';
    }
    return 0;
}

int run_calibrate(const std::string& path, const std::string& out) {
    const auto targets_json = ordered_json::parse(read_text(path));
    const auto targets = calibration_targets_from_json(targets_json);
    const auto cal = calibrate_quasiharmonic(targets);
    ordered_json prov;
    prov["generated_by"] = "nvecho calibrate-response";
    prov["targets"] = targets_json;
    ordered_json achieved = ordered_json::array();
    for (const auto& [T, r] : cal.achieved_ratio) achieved.push_back(ordered_json::array({T, r}));
    prov["achieved_A_zz_to_Q_slope_ratio"] = achieved;
    prov["ratio_relative_residual"] = cal.relative_residual;
    const double T0 = cal.set.reference_T();
    prov["slopes_at_reference_Hz_per_K"] = {{"Q", to_hz(quasiharmonic_slope(cal.set.Q, T0))},
                                            {"A_zz", to_hz(quasiharmonic_slope(cal.set.A_zz, T0))},
                                            {"D", to_hz(quasiharmonic_slope(cal.set.D, T0))}};
    const std::string body = dump_json(quasiharmonic_to_json(cal.set, prov));
    if (out.empty()) {
        std::cout << body;
    } else {
        std::ofstream os(out, std::ios::binary);
        if (!os) throw UsageError("cannot write '" + out + "'");
        os << body;
        std::cerr << "wrote " << out << " (ratio residual " << detail::short_number(cal.relative_residual) << ")\n";
    }
    return 0;
}

int run_parse_seq(const std::string& path, const std::string& config, const GlobalOptions& g) {
    const auto seq = parse_sequence_script(read_text(path));
    std::cout << print_sequence_script(seq);
    std::cout << "# kind: " << to_string(seq.kind) << ", duration: " << format_duration_token(seq.total_duration()) << '\n';
    if (!config.empty()) {
        auto cfg = load_scenario_file(config, g.data_dir);
        apply_overrides(cfg, g);
        const auto ens = build_ensemble(cfg, g.data_dir);
        const auto amp = simulate_amplitude(seq, ens, cfg.backend);
        std::cout << "# amplitude: " << format_number(amp.amplitude()) << ", static phase: " << format_number(amp.static_phase)
                  << " rad\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ensemble dephasing simulator and estimator for NV-center nuclear spins"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions g;
    g.data_dir = default_data_dir();
    g.config_dir = default_config_dir();
    app.add_option("--out", g.out, "Output directory (overrides the config)");
    app.add_option("--data-dir", g.data_dir, std::string("Data directory (default: $") + data_dir_env + " or built-in)");
    app.add_option("--workers", g.workers, "Worker threads for Monte-Carlo (0 = all cores); never changes results");
    app.add_option("--seed", g.seed, "Monte-Carlo seed override");
    app.add_option("--samples", g.samples, "Monte-Carlo sample count override");
    app.add_flag("--deterministic", g.deterministic, "Omit timestamps and timings so output is byte-identical");
    app.add_flag("-q,--quiet", g.quiet, "Do not list written files");

    std::string config_path;
    auto* simulate = app.add_subcommand("simulate", "Run the decay series (and script) of a config");
    simulate->add_option("config", config_path, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);

    auto* sweep = app.add_subcommand("sweep", "Run the pulse-location sweeps and rate tables of a config");
    sweep->add_option("config", config_path, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);

    auto* run = app.add_subcommand("run", "Run every section of a config");
    run->add_option("config", config_path, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);

    std::string figure;
    bool list = false;
    auto* reproduce = app.add_subcommand("reproduce", "Run a shipped reproduction scenario");
    reproduce->add_option("figure", figure, "fig1c, fig1d, fig2, fig2c, fig4 or s5");
    reproduce->add_option("--config-dir", g.config_dir, std::string("Directory of scenario configs (default: $") + config_dir_env + " or built-in)");
    reproduce->add_flag("--list", list, "List available scenarios");

    std::string fit_file, fit_model = "exponential", fit_out;
    std::size_t skip = default_skip_initial;
    bool robust = false;
    auto* fit = app.add_subcommand("fit", "Fit a signal or rate-table CSV and print the result as JSON");
    fit->add_option("file", fit_file, "CSV file")->required()->check(CLI::ExistingFile);
    fit->add_option("--model", fit_model, "exponential, cosine, vee or line")
        ->check(CLI::IsMember({"exponential", "cosine", "vee", "line"}));
    fit->add_option("--skip-initial", skip, "Leading points dropped by the exponential fit");
    fit->add_flag("--robust", robust, "Soft-L1 loss for the V fit");
    fit->add_option("-o,--output", fit_out, "Write JSON here instead of stdout");

    std::string targets, cal_out;
    auto* calibrate = app.add_subcommand("calibrate-response", "Fit the quasiharmonic surrogate to calibration targets");
    calibrate->add_option("targets", targets, "Calibration targets (JSON)")->required()->check(CLI::ExistingFile);
    calibrate->add_option("-o,--output", cal_out, "Response data file to write (default: stdout)");

    std::string seq_file, seq_config;
    auto* parse_seq = app.add_subcommand("parse-seq", "Parse a sequence script and print its canonical form");
    parse_seq->add_option("script", seq_file, "Sequence script")->required()->check(CLI::ExistingFile);
    parse_seq->add_option("--config", seq_config, "Scenario config providing the ensemble; prints the amplitude")
        ->check(CLI::ExistingFile);

    auto* print_config = app.add_subcommand("print-config", "Validate a config and print its canonical form");
    print_config->add_option("config", config_path, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*simulate) return run_config(config_path, g, {true, false, false, true});
        if (*sweep) return run_config(config_path, g, {false, true, true, false});
        if (*run) return run_config(config_path, g, RunSections::all());
        if (*reproduce) {
            namespace fs = std::filesystem;
            if (list || figure.empty()) {
                std::vector<std::string> names;
                if (fs::is_directory(g.config_dir)) {
                    for (const auto& e : fs::directory_iterator(g.config_dir)) {
                        if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
                    }
                }
                std::sort(names.begin(), names.end());
                for (const auto& n : names) std::cout << n << '\n';
                return figure.empty() && !list ? 2 : 0;
            }
            const auto path = fs::path(g.config_dir) / (figure + ".json");
            if (!fs::exists(path)) throw UsageError("no scenario '" + figure + "' in " + g.config_dir + " (try --list)");
            GlobalOptions go = g;
            if (go.out.empty()) go.out = (fs::path("out") / figure).string();
            return run_config(path.string(), go, RunSections::all());
        }
        if (*fit) return run_fit(fit_file, fit_model, skip, robust, fit_out);
        if (*calibrate) return run_calibrate(targets, cal_out);
        if (*parse_seq) return run_parse_seq(seq_file, seq_config, g);
        if (*print_config) {
            const auto cfg = load_scenario_file(config_path, g.data_dir);
            std::cout << dump_json(scenario_to_json(cfg));
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
