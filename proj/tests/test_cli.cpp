#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "nvecho/nvecho.hpp"

using namespace nvecho;

namespace {

namespace fs = std::filesystem;

const std::string config_dir = NVECHO_TEST_CONFIG_DIR;
const std::string data_dir = NVECHO_TEST_DATA_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ParseError parse_error_of(const std::string& text) {
    try {
        parse_sequence_script(text);
    } catch (const ParseError& e) {
        return e;
    }
    ADD_FAILURE() << "no parse error for:\n" << text;
    return ParseError("none", 0, 0);
}

ConfigError config_error_of(const std::string& text) {
    try {
        parse_scenario(ordered_json::parse(text), {}, data_dir);
    } catch (const ConfigError& e) {
        return e;
    }
    ADD_FAILURE() << "no config error for:\n" << text;
    return ConfigError({});
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("nvecho_test_" + name);
    fs::remove_all(p);
    return p;
}

const char* small_mc_config = R"({
  "name": "small_mc",
  "response": {"model": "quasiharmonic", "data_file": "quasiharmonic_default.json"},
  "noise": [{"variable": "temperature", "distribution": "lorentzian", "mu": "0 K", "sigma": "25 K"}],
  "backend": {"type": "monte_carlo", "samples": 20000, "seed": 3, "workers": 1},
  "sweeps": [{"label": "s", "t": "2 ms", "tau_over_t": {"start": 0.1, "stop": 0.3, "count": 5}, "pair": [0, -1], "ms_free": 0, "ms_flipped": 1}],
  "series": [{"label": "p", "sequence": "unbalanced_echo", "pair": [0, -1], "ms_free": 0, "ms_flipped": 1,
              "tau_from_sweep": "s", "t_grid": {"start": "1 ms", "stop": "20 ms", "count": 10}}]
})";

} // namespace

TEST(SequenceScript, SingleSegmentRamsey) {
    const auto seq = parse_sequence_script("pair 0 -1\nevolve 1ms ms=0\n");
    EXPECT_EQ(seq.kind, SequenceKind::ramsey);
    ASSERT_EQ(seq.segments.size(), 1u);
    EXPECT_EQ(seq.segments[0].duration, 1e-3);
    EXPECT_EQ(seq.segments[0].ms, 0);
    EXPECT_EQ(seq.pair, sq_minus);
    EXPECT_EQ(parse_sequence_script("pair -1 1\nevolve 2ms ms=0").kind, SequenceKind::dq_ramsey);
}

TEST(SequenceScript, ProtectionSequence) {
    const auto seq = parse_sequence_script(slurp(fs::path(NVECHO_TEST_SOURCE_DIR) / "data/fig1b.seq"));
    EXPECT_EQ(seq.kind, SequenceKind::unbalanced_echo);
    ASSERT_EQ(seq.segments.size(), 2u);
    EXPECT_EQ(seq, build_unbalanced_echo(1.4e-3, 0.252e-3, sq_minus, 0, 1));
    EXPECT_NEAR(seq.segments[1].duration / seq.total_duration(), 0.18, 1e-12);
}

TEST(SequenceScript, NuclearEcho) {
    const auto seq = parse_sequence_script("pair 0 1\nevolve 0.5ms ms=1\nflip-n\nevolve 0.5ms\n");
    EXPECT_EQ(seq.kind, SequenceKind::nuclear_echo);
    EXPECT_EQ(seq.nuclear_flip_at, 0.5e-3);
    EXPECT_TRUE(seq.segments[1].nuclear_inverted);
    EXPECT_EQ(seq, build_nuclear_echo(1e-3, sq_plus, 1));
}

TEST(SequenceScript, ErrorsNameTheOffendingToken) {
    const auto neg = parse_error_of("pair 0 -1\nevolve -1ms ms=0\n");
    EXPECT_EQ(neg.line(), 2);
    EXPECT_EQ(neg.column(), 8);
    EXPECT_NE(std::string(neg.what()).find("-1ms"), std::string::npos);

    const auto unknown = parse_error_of("pair 0 -1\n  wait 1ms\n");
    EXPECT_EQ(unknown.line(), 2);
    EXPECT_EQ(unknown.column(), 3);
    EXPECT_NE(std::string(unknown.what()).find("wait"), std::string::npos);

    const auto unit = parse_error_of("pair 0 -1\nevolve 1kg ms=0\n");
    EXPECT_EQ(unit.line(), 2);
    EXPECT_EQ(unit.column(), 8);

    const auto bare = parse_error_of("pair 0 -1\nevolve 1 ms=0\n");
    EXPECT_EQ(bare.column(), 8);

    const auto qn = parse_error_of("pair 0 -1\nevolve 1ms ms=2\n");
    EXPECT_EQ(qn.column(), 15);
    EXPECT_NE(std::string(qn.what()).find("'2'"), std::string::npos);

    EXPECT_EQ(parse_error_of("pair 0 3\n").column(), 8);
    EXPECT_EQ(parse_error_of("pair 0 -1\nevolve 1ms\n").line(), 2);
    EXPECT_EQ(parse_error_of("pair 0 -1\nevolve 1ms ms=0\nevolve 1ms ms=1\n").line(), 3);
    EXPECT_EQ(parse_error_of("pair 0 -1\nevolve 1ms ms=0\nflip-e ms=+1\n").line(), 3);
    parse_error_of("evolve 1ms ms=0\n");
    parse_error_of("# nothing\n");
}

TEST(SequenceScript, CanonicalRoundTrip) {
    const std::vector<std::string> scripts{
        "pair 0 -1\nevolve 1ms ms=0\n",
        "pair 0 -1 # comment\n\n  evolve 1148us ms=0\nflip-e   ms=+1\nevolve 0.252ms\n",
        "pair 1 0\nevolve 3.3e-4s ms=-1\nflip-n\nevolve 17us ms=-1\n",
        "pair -1 1\nevolve 2.5ms ms=+1\n",
    };
    for (const auto& text : scripts) {
        const auto seq = parse_sequence_script(text);
        const auto canonical = print_sequence_script(seq);
        EXPECT_EQ(parse_sequence_script(canonical), seq) << canonical;
        EXPECT_EQ(print_sequence_script(parse_sequence_script(canonical)), canonical);
    }
    EXPECT_EQ(print_sequence_script(build_unbalanced_echo(1.4e-3, 0.252e-3, sq_minus, 0, 1)),
              "pair 0 -1\nevolve 1148us ms=0\nflip-e ms=+1\nevolve 252us ms=+1\n");
}

TEST(ScenarioConfig, ShippedConfigsAreFixedPoints) {
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(config_dir)) {
        if (entry.path().extension() != ".json") continue;
        ++n;
        const auto cfg = load_scenario_file(entry.path().string(), data_dir);
        const auto printed = dump_json(scenario_to_json(cfg));
        const auto again = parse_scenario(ordered_json::parse(printed), cfg.base_dir, data_dir);
        EXPECT_EQ(again, cfg) << entry.path();
        EXPECT_EQ(dump_json(scenario_to_json(again)), printed) << entry.path();
    }
    EXPECT_EQ(n, 6u);
}

TEST(ScenarioConfig, UnitsAreCanonicalized) {
    const auto cfg = parse_scenario(ordered_json::parse(R"({"name": "u",
        "spin": {"B": "239 G", "Q": "-4945 kHz"},
        "noise": [{"variable": "temperature", "distribution": "gaussian", "sigma": "5 K"}],
        "series": [{"label": "r", "sequence": "ramsey", "pair": [0, 1], "ms": 0,
                    "t_grid": {"start": "10 us", "stop": "1 ms", "count": 10}}]})"),
                                    {}, data_dir);
    EXPECT_NEAR(cfg.spin.params().B, 239.0, 1e-9);
    EXPECT_NEAR(cfg.spin.params().Q, SpinSystemParams{}.Q, 1e-6);
    const auto again = parse_scenario(scenario_to_json(cfg), {}, data_dir);
    EXPECT_EQ(again, cfg);
}

TEST(ScenarioConfig, ErrorsAreAggregated) {
    const auto err = config_error_of(slurp(fs::path(NVECHO_TEST_SOURCE_DIR) / "data/bad_config.json"));
    EXPECT_GE(err.issues().size(), 4u);
    const std::string what = err.what();
    EXPECT_NE(what.find("spin.B"), std::string::npos);
    EXPECT_NE(what.find("cauchy"), std::string::npos);
}

TEST(ScenarioConfig, BareNumbersRejected) {
    const auto err = config_error_of(R"({"name": "b", "noise": [{"variable": "temperature", "distribution": "lorentzian", "sigma": 5}],
        "series": [{"label": "r", "sequence": "ramsey", "pair": [0, 1], "ms": 0,
                    "t_grid": {"start": 1e-5, "stop": "1 ms", "count": 10}}]})");
    ASSERT_EQ(err.issues().size(), 2u);
    EXPECT_NE(err.issues()[0].find("sigma"), std::string::npos);
    EXPECT_NE(err.issues()[1].find("start"), std::string::npos);
}

TEST(ScenarioConfig, RejectsInconsistentModels) {
    config_error_of(R"({"name": "q", "response": {"model": "quasiharmonic", "data_file": "quasiharmonic_default.json"},
        "noise": [{"variable": "temperature", "distribution": "lorentzian", "sigma": "5 K"}],
        "series": [{"label": "r", "sequence": "ramsey", "pair": [0, 1], "ms": 0,
                    "t_grid": {"start": "10 us", "stop": "1 ms", "count": 10}}]})");
    config_error_of(R"({"name": "m", "response": {"model": "quasiharmonic", "data_file": "missing.json"},
        "backend": {"type": "monte_carlo"},
        "series": [{"label": "r", "sequence": "ramsey", "pair": [0, 1], "ms": 0,
                    "t_grid": {"start": "10 us", "stop": "1 ms", "count": 10}}]})");
    config_error_of(R"({"name": "empty"})");
    config_error_of(R"({"name": "typo", "seires": []})");
}

TEST(SignalIo, CsvRoundTrip) {
    EnsembleSignal sig{"t_s", "amplitude", {1e-5, 2.5e-4, 0.1}, {1.0, 0.123456789012345678, 1e-300}, {}};
    sig.set_meta("sequence", "ramsey");
    sig.set_meta("noise", "temperature:lorentzian(mu=0,sigma=5)");
    std::ostringstream os;
    write_signal_csv(os, sig, {true});
    const std::string text = os.str();
    EXPECT_EQ(text.find("generated"), std::string::npos);
    EXPECT_EQ(text.rfind("# sequence: ramsey\n", 0), 0u);
    std::istringstream is(text);
    const auto back = read_signal_csv(is);
    EXPECT_EQ(back.axis, sig.axis);
    EXPECT_EQ(back.values, sig.values);
    EXPECT_EQ(back.metadata, sig.metadata);
    EXPECT_EQ(back.axis_name, "t_s");

    std::ostringstream stamped;
    write_signal_csv(stamped, sig, {false});
    EXPECT_NE(stamped.str().find("# generated: "), std::string::npos);
    std::istringstream is2(stamped.str());
    EXPECT_EQ(read_signal_csv(is2).metadata, sig.metadata);

    std::istringstream broken("a,b\n1,2,3\n");
    EXPECT_THROW(read_signal_csv(broken), ParseError);
}

TEST(SignalIo, RateTableRoundTrip) {
    RateTable t;
    t.rows = {{sq_minus, {0, 1}, 0.0, 1234.5}, {sq_minus, {0, 1}, 0.05, 987.25}};
    std::ostringstream os;
    write_rate_table_csv(os, t, {{"label", "x"}}, {true});
    std::istringstream is(os.str());
    const auto back = read_rate_table_csv(is);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rates(), t.rates());
    EXPECT_EQ(back.tau_over_t(), t.tau_over_t());
    EXPECT_EQ(back.rows[1].pair, sq_minus);
}

TEST(SignalIo, FitJsonHasStableKeyOrder) {
    const auto t = linspace(0.1e-3, 5e-3, 12);
    std::vector<double> a;
    for (double x : t) a.push_back(std::exp(-x / 1e-3));
    const auto j = to_json(fit_exponential(t, a));
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"model", "parameters", "stddev", "covariance", "residual_norm", "points_used",
                                              "skip_initial", "flags"}));
    EXPECT_EQ(j.dump(), to_json(fit_exponential(t, a)).dump());
}

TEST(RunScenario, Fig2cRatio) {
    const auto cfg = load_scenario_file(config_dir + "/fig2c.json", data_dir);
    const auto r = run_scenario(cfg, RunSections::all(), data_dir);
    const auto* vee = r.find_rate_table("rates_0m1");
    ASSERT_NE(vee, nullptr);
    ASSERT_TRUE(vee->fit.has_value());
    EXPECT_NEAR(vee->fit->get("ratio"), 0.18, 0.005);
    const auto* line = r.find_rate_table("rates_0p1");
    ASSERT_NE(line, nullptr);
    ASSERT_TRUE(line->fit.has_value());
    EXPECT_NEAR(line->fit->get("x_intercept"), -0.21, 0.02);
    EXPECT_NE(summary_line(r).find("rates_0m1 ratio=0.18"), std::string::npos);
}

TEST(RunScenario, Fig1cWritesSignalsAndFits) {
    auto cfg = load_scenario_file(config_dir + "/fig1c.json", data_dir);
    const auto r = run_scenario(cfg, {true, false, false, false}, data_dir);
    const auto dir = scratch("fig1c");
    const auto files = write_scenario_outputs(r, dir.string(), {true, true, true});
    EXPECT_TRUE(fs::exists(dir / "unprotected.csv"));
    EXPECT_TRUE(fs::exists(dir / "protected.csv"));
    const auto summary = ordered_json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(summary.at("name"), "fig1c");
    std::ifstream in(dir / "protected.csv");
    const auto sig = read_signal_csv(in);
    EXPECT_EQ(sig.values, r.find_series("protected")->signal.values);
    fs::remove_all(dir);
}

TEST(RunScenario, ByteIdenticalAcrossWorkerCounts) {
    auto cfg = parse_scenario(ordered_json::parse(small_mc_config), {}, data_dir);
    std::vector<std::map<std::string, std::string>> outputs;
    for (unsigned w : {1u, 2u, 5u}) {
        cfg.backend.mc.workers = w;
        const auto dir = scratch("workers" + std::to_string(w));
        write_scenario_outputs(run_scenario(cfg, RunSections::all(), data_dir), dir.string(), {true, true, true});
        std::map<std::string, std::string> files;
        for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
        outputs.push_back(files);
        fs::remove_all(dir);
    }
    ASSERT_FALSE(outputs[0].empty());
    EXPECT_EQ(outputs[0], outputs[1]);
    EXPECT_EQ(outputs[0], outputs[2]);
}

TEST(RunScenario, SeedChangesMonteCarloOutput) {
    auto cfg = parse_scenario(ordered_json::parse(small_mc_config), {}, data_dir);
    const auto a = run_scenario(cfg, {false, true, false, false}, data_dir);
    cfg.backend.mc.seed = 4;
    const auto b = run_scenario(cfg, {false, true, false, false}, data_dir);
    EXPECT_NE(a.sweeps[0].signal.values, b.sweeps[0].signal.values);
}

TEST(DataDir, EnvironmentOverridesDefault) {
    ::setenv(data_dir_env, "/tmp/nvecho_env_dir", 1);
    EXPECT_EQ(default_data_dir(), "/tmp/nvecho_env_dir");
    ::unsetenv(data_dir_env);
    EXPECT_NE(default_data_dir(), "/tmp/nvecho_env_dir");
}
