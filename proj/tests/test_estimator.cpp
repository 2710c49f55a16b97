#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nvecho/estimator.hpp"
#include "nvecho/sequence_engine.hpp"

using namespace nvecho;

namespace {


Ensemble thermal(double sigma_T, const LinearResponse& resp = LinearResponse::defaults()) {
    Ensemble e;
    e.response.linear = resp;
    e.sources = {{NoiseVariable::temperature, Distribution::lorentzian(0.0, sigma_T)}};
    return e;
}

double scan_rate(const SequenceFamily& family, const Ensemble& e, double t_max) {
    const auto grid = linspace(t_max / 20.0, t_max, 20);
    return 1.0 / fit_exponential(grid, decay_scan(grid, family, e).values).get("T2");
}

RateTable rate_table(LevelPair pair, const Ensemble& e, std::size_t points = 21) {
    RateTable table;
    for (double x : linspace(0.0, 1.0, points)) {
        const auto grid = linspace(0.1e-3, 2e-3, 20);
        const auto scan = decay_scan(grid, unbalanced_echo_family(x, pair, {0, 1}), e);
        table.rows.push_back({pair, {0, 1}, x, decay_rate(scan)});
    }
    return table;
}

} // namespace

TEST(FitCosine, ExactRoundTrip) {
    std::vector<double> ph, s;
    for (int k = 0; k < 8; ++k) {
        ph.push_back(two_pi * k / 8.0);
        s.push_back(0.5 + 0.5 * std::cos(ph.back()));
    }
    const auto f = fit_cosine(ph, s);
    EXPECT_NEAR(f.get("c_max"), 1.0, 1e-10);
    EXPECT_NEAR(f.get("phi0"), 0.0, 1e-10);
    EXPECT_NEAR(f.get("c0"), 1.0, 1e-10);
    EXPECT_FALSE(f.has_flag("phase_unconstrained"));

    std::vector<double> s2;
    for (double p : ph) s2.push_back(0.9 - 0.35 + 0.35 * std::cos(p + 1.1));
    const auto g = fit_cosine(ph, s2);
    EXPECT_NEAR(g.get("c_max"), 0.7, 1e-10);
    EXPECT_NEAR(g.get("phi0"), 1.1, 1e-10);
    EXPECT_NEAR(g.get("c0"), 0.9, 1e-10);
}

TEST(FitCosine, ConstantSignalIsFlagged) {
    const auto ph = linspace(0.0, two_pi, 9);
    const auto f = fit_cosine(ph, std::vector<double>(9, 0.4));
    EXPECT_NEAR(f.get("c_max"), 0.0, 1e-12);
    EXPECT_TRUE(f.has_flag("phase_unconstrained"));
}

TEST(FitCosine, NoisyRecovery) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0.0, 0.01);
    const auto ph = linspace(0.0, two_pi * 31.0 / 32.0, 32);
    for (int set = 0; set < 100; ++set) {
        std::vector<double> s;
        for (double p : ph) s.push_back(0.5 + 0.5 * std::cos(p + 0.3) + noise(rng));
        EXPECT_NEAR(fit_cosine(ph, s).get("c_max"), 1.0, 0.03) << set;
    }
}

TEST(FitCosine, RejectsDegenerateInput) {
    EXPECT_THROW(fit_cosine(std::vector<double>{0.0, 0.1, 0.2}, std::vector<double>{1.0, 1.0, 1.0}), FitError);
    EXPECT_THROW(fit_cosine(linspace(0.0, 1.0, 10), std::vector<double>(10, 1.0)), FitError);
    EXPECT_THROW(fit_cosine(linspace(0.0, two_pi, 10), std::vector<double>(9, 1.0)), FitError);
}

TEST(FitExponential, ExactRoundTrip) {
    const auto t = linspace(0.1e-3, 5e-3, 25);
    std::vector<double> a;
    for (double x : t) a.push_back(0.83 * std::exp(-x / 1.7e-3));
    const auto f = fit_exponential(t, a);
    EXPECT_NEAR(f.get("T2"), 1.7e-3, 1e-8 * 1.7e-3);
    EXPECT_NEAR(f.get("c0"), 0.83, 1e-8);
    EXPECT_EQ(f.skip_initial, 3u);
    EXPECT_EQ(f.points_used, 22u);
    EXPECT_EQ(fit_exponential(t, a, 0).points_used, 25u);
}

TEST(FitExponential, ClosedFormScans) {
    const auto grid = linspace(50e-6, 3e-3, 40);
    const auto scan = decay_scan(grid, ramsey_family(sq_minus, 0), thermal(5.0));
    EXPECT_NEAR(fit_exponential(scan.axis, scan.values).get("T2"), 816.16e-6, 0.001 * 816.16e-6);
    EXPECT_NEAR(fit_exponential(scan.axis, scan.values).get("T2"), 1.0 / (two_pi * 39.0 * 5.0), 1e-9);

    auto e = thermal(5.0);
    e.sources.push_back(residual_field_source(1.0 / 3.9e-3));
    const double r = e.response.linear.alpha_Q / e.response.linear.alpha_A;
    const auto long_grid = linspace(0.2e-3, 12e-3, 40);
    const auto prot = decay_scan(long_grid, unbalanced_echo_family(r, sq_minus, {0, 1}), e);
    EXPECT_NEAR(fit_exponential(prot.axis, prot.values).get("T2"), 3.9e-3, 0.001 * 3.9e-3);
}

TEST(FitExponential, Errors) {
    const auto t = linspace(0.0, 1.0, 10);
    EXPECT_THROW(fit_exponential(t, std::vector<double>(10, 1.0)), FitError);
    std::vector<double> grow;
    for (double x : t) grow.push_back(std::exp(x));
    EXPECT_THROW(fit_exponential(t, grow), FitError);
    EXPECT_THROW(fit_exponential(linspace(0.0, 1.0, 7), std::vector<double>(7, 0.5), 3), FitError);
}

TEST(FitVee, SyntheticRoundTrip) {
    const auto x = linspace(0.0, 1.0, 21);
    std::vector<double> rate;
    for (double v : x) rate.push_back(5000.0 * std::abs(v - 0.18));
    const auto f = fit_vee(x, rate);
    EXPECT_NEAR(f.get("ratio"), 0.18, 1e-6 * 0.18);
    EXPECT_NEAR(f.get("slope"), 5000.0, 1e-6 * 5000.0);
    EXPECT_NEAR(f.get("baseline"), 0.0, 1e-6);
}

TEST(FitVee, BaselineInvariance) {
    const auto x = linspace(0.0, 1.0, 21);
    std::vector<double> rate, shifted;
    for (double v : x) {
        rate.push_back(3000.0 * std::abs(v - 0.27) + 10.0);
        shifted.push_back(rate.back() + 250.0);
    }
    const auto a = fit_vee(x, rate), b = fit_vee(x, shifted);
    EXPECT_NEAR(a.get("ratio"), b.get("ratio"), 1e-9);
    EXPECT_NEAR(b.get("baseline") - a.get("baseline"), 250.0, 1e-6);

    std::vector<double> line, line_shifted;
    for (double v : x) {
        line.push_back(3000.0 * (v + 0.18));
        line_shifted.push_back(line.back() + 250.0);
    }
    const auto l0 = fit_line_intercept(x, line), l1 = fit_line_intercept(x, line_shifted);
    EXPECT_NEAR(l0.get("x_intercept"), -0.18, 1e-12);
    EXPECT_NEAR(l1.get("x_intercept"), l0.get("x_intercept") - 250.0 / l0.get("slope"), 1e-12);
}

TEST(FitVee, RobustLossMatchesOnCleanData) {
    const auto x = linspace(0.0, 1.0, 21);
    std::vector<double> rate;
    for (double v : x) rate.push_back(4000.0 * std::abs(v - 0.33) + 50.0);
    rate[15] += 2000.0;
    const auto f = fit_vee(x, rate, VeeOptions{true});
    EXPECT_TRUE(f.has_flag("soft_l1"));
    EXPECT_NEAR(f.get("ratio"), 0.33, 0.01);
}

TEST(FitVee, RequiresStraddle) {
    const auto x = linspace(0.3, 1.0, 15);
    std::vector<double> rate;
    for (double v : x) rate.push_back(1000.0 * (v - 0.1));
    try {
        fit_vee(x, rate);
        FAIL() << "expected a fit error";
    } catch (const FitError& e) {
        EXPECT_NE(std::string(e.what()).find("extend"), std::string::npos);
    }
    EXPECT_THROW(fit_vee(linspace(0.0, 1.0, 5), std::vector<double>(5, 1.0)), FitError);
}

TEST(FitVee, ClosedFormPipeline) {
    auto e = thermal(5.0, LinearResponse::with_ratio(0.18));
    e.sources.push_back(residual_field_source(128.0));
    const auto vee = fit_vee(rate_table(sq_minus, e));
    EXPECT_NEAR(vee.get("ratio"), 0.180, 0.005);
    EXPECT_NEAR(vee.get("baseline"), 128.0, 0.5);

    const auto table = rate_table(sq_plus, e);
    const auto line = fit_line_intercept(table.tau_over_t(), table.rates());
    EXPECT_NEAR(line.get("x_intercept"), -0.21, 0.02);
    EXPECT_NEAR(line.get("x_intercept"), -0.18 - 128.0 / line.get("slope"), 1e-6);
}

TEST(EstimateSigma, Examples) {
    const double aQ = two_pi * 39.0;
    const auto s = estimate_sigma(1.0 / 816.16e-6, aQ);
    EXPECT_NEAR(s.sigma, 5.0, 1e-3);
    EXPECT_FALSE(s.below_baseline);
    EXPECT_EQ(estimate_sigma(100.0, aQ, 100.0).sigma, 0.0);
    const auto low = estimate_sigma(50.0, aQ, 100.0);
    EXPECT_TRUE(low.below_baseline);
    EXPECT_EQ(low.sigma, 0.0);
    EXPECT_NEAR(estimate_sigma(1000.0, aQ, 0.0, 400.0).uncertainty, 20.0 / aQ, 1e-15);
    EXPECT_THROW(estimate_sigma(1.0, 0.0), DomainError);
}

TEST(EstimateSigma, TwoSourceRecovery) {
    const auto resp = LinearResponse::defaults();
    EXPECT_NEAR(resp.beta_A / two_pi, -5.7546e6, 0.001e6);
    EXPECT_NEAR(resp.beta_Q / two_pi, -2.1264e6, 0.001e6);
    const double sigma_T = 5.0, sigma_eps = 1e-5;
    Ensemble e;
    e.response.linear = resp;
    e.sources = {{NoiseVariable::temperature, Distribution::lorentzian(0.0, sigma_T)},
                 {NoiseVariable::strain, Distribution::lorentzian(0.0, sigma_eps)}};
    const std::vector<std::pair<LevelPair, int>> configs{{sq_minus, 0}, {sq_plus, 1}, {sq_minus, 1}, {sq_plus, -1}};
    std::vector<RateEquation> eqs;
    for (const auto& [pair, ms] : configs) {
        const auto w = phase_weights(build_ramsey(1.0, pair, ms).segments, pair, SpinSystemParams{});
        const double cT = w.fluctuation(resp.temperature_shift(1.0));
        const double cE = w.fluctuation(resp.strain_shift(1.0));
        const double rate = scan_rate(ramsey_family(pair, ms), e, 3.0 / (std::abs(cT) * sigma_T + std::abs(cE) * sigma_eps));
        eqs.push_back({rate, {cT, cE}});
    }
    const auto est = estimate_sigmas(eqs);
    EXPECT_NEAR(est.sigma[0], sigma_T, 0.05 * sigma_T);
    EXPECT_NEAR(est.sigma[1], sigma_eps, 0.05 * sigma_eps);
}

TEST(Spectroscopy, Examples) {
    const auto zero = extract_interaction_shifts({});
    EXPECT_EQ(zero.dQ_abs, 0.0);
    EXPECT_EQ(zero.dA_abs, 0.0);

    const auto single = extract_interaction_shifts({two_pi * 10.0, two_pi * 10.0, 0.0, 0.0, 0.0, 0.0});
    EXPECT_NEAR(single.dQ_abs, two_pi * 10.0, 1e-12);
    EXPECT_EQ(single.dA_abs, 0.0);

    const SpinSystemParams p;
    const auto dw = transition_shifts(p, {two_pi * 39.0, two_pi * 204.0, 0.0, 0.0});
    const auto got = extract_interaction_shifts(dw);
    // Q and A_zz are negative, so a positive signed shift shrinks the magnitude.
    EXPECT_NEAR(got.dQ_abs, -two_pi * 39.0, 1e-6);
    EXPECT_NEAR(got.dA_abs, -two_pi * 204.0, 1e-6);
}

TEST(Spectroscopy, ExtractResynthesizeFixedPoint) {
    for (const auto& s : {InteractionMagnitudeShift{1.5, -0.25}, InteractionMagnitudeShift{-300.0, 80.0}}) {
        const auto dw = synthesize_transition_shifts(s);
        const auto back = synthesize_transition_shifts(extract_interaction_shifts(dw));
        for (std::size_t k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(back[k], dw[k]);
    }
    const SpinSystemParams p;
    const auto dw = transition_shifts(p, {-two_pi * 500.0, two_pi * 120.0, 0.0, 0.0});
    const auto back = synthesize_transition_shifts(extract_interaction_shifts(dw));
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(back[k], dw[k], 1e-6);
}

TEST(TemperatureFromZfs, Examples) {
    EXPECT_EQ(temperature_from_zfs(0.0), 0.0);
    EXPECT_NEAR(temperature_from_zfs(-two_pi * 77.7e3), 1.0, 1e-15);
    EXPECT_NEAR(temperature_from_zfs(two_pi * 155.4e3), -2.0, 1e-15);
    EXPECT_THROW(temperature_from_zfs(1.0, 0.0), DomainError);
}

TEST(PredictRate, SupplementRatios) {
    LinearResponse resp = LinearResponse::defaults();
    resp.alpha_A = 5.56 * resp.alpha_Q;
    const double sT = 5.0, sB = 0.7;
    const SpinSystemParams p;
    const double field = std::abs(p.gamma_n) * sB;
    const double minus = predict_rate({RateKind::nuclear_sq, -1, -1}, sT, sB, resp) - field;
    const double plus = predict_rate({RateKind::nuclear_sq, 1, -1}, sT, sB, resp) - field;
    EXPECT_NEAR(minus / plus, 6.56 / 4.56, 1e-12);
    EXPECT_NEAR(std::round(minus / plus * 100.0) / 100.0, 1.44, 1e-12);

    const double ms0 = predict_rate({RateKind::nuclear_sq, 1, 0}, sT, sB, resp) - field;
    const double ms1 = predict_rate({RateKind::nuclear_sq, 1, 1}, sT, sB, resp) - field;
    EXPECT_NEAR(ms0 / ms1, 1.0 / 6.56, 1e-12);
    EXPECT_NEAR(std::round(ms0 / ms1 * 100.0) / 100.0, 0.15, 1e-12);

    EXPECT_EQ(predict_rate({RateKind::nuclear_sq, 1, 1}, 0.0, 0.0), 0.0);
    EXPECT_EQ(predict_rate({RateKind::nuclear_dq, 1, 0}, 0.0, 0.0), 0.0);
    EXPECT_GT(predict_rate({RateKind::electronic_sq}, 1.0, 0.0), 0.0);
    EXPECT_THROW(predict_rate({RateKind::nuclear_sq, 0, 0}, 1.0, 1.0), DomainError);
    EXPECT_THROW(predict_rate({RateKind::nuclear_sq, 1, 0}, -1.0, 1.0), DomainError);
}

TEST(PredictRate, MatchesFittedClosedFormScans) {
    const double sT = 5.0, sB = 0.9;
    Ensemble e = thermal(sT);
    e.sources.push_back({NoiseVariable::field, Distribution::lorentzian(0.0, sB)});
    for (int ms = -1; ms <= 1; ++ms) {
        for (int mi : {-1, 1}) {
            const double predicted = predict_rate({RateKind::nuclear_sq, mi, ms}, sT, sB);
            const double fitted = scan_rate(ramsey_family(LevelPair{0, mi}, ms), e, 3.0 / predicted);
            EXPECT_NEAR(fitted, predicted, 1e-4 * predicted) << "mi " << mi << " ms " << ms;
        }
        const double predicted = predict_rate({RateKind::nuclear_dq, 1, ms}, sT, sB);
        const double fitted = scan_rate(dq_ramsey_family(ms), e, 3.0 / predicted);
        EXPECT_NEAR(fitted, predicted, 1e-4 * predicted) << "dq ms " << ms;
    }
}
