#pragma once

// Fits of simulated or measured signals and the characterization algebra built
// on them: coherence times, the Q/A_zz response ratio from pulse-location
// rates, noise widths, six-transition spectroscopy and rate predictions.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "least_squares.hpp"
#include "response_model.hpp"
#include "sequence_engine.hpp"
#include "spin_model.hpp"

namespace nvecho {

struct FitResult {
    std::string model;
    std::vector<std::pair<std::string, double>> parameters;
    Eigen::MatrixXd covariance;
    double residual_norm = 0.0;
    std::size_t points_used = 0;
    std::size_t skip_initial = 0;
    std::vector<std::string> flags;

    double get(const std::string& name) const {
        for (const auto& [k, v] : parameters) {
            if (k == name) return v;
        }
        throw Error("fit result has no parameter '" + name + "'");
    }
    double stddev(const std::string& name) const {
        for (std::size_t i = 0; i < parameters.size(); ++i) {
            if (parameters[i].first == name) return std::sqrt(std::max(0.0, covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
        }
        throw Error("fit result has no parameter '" + name + "'");
    }
    bool has_flag(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

namespace detail {

inline void require_same_length(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw FitError("abscissa and data differ in length");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw FitError("fit input contains non-finite values");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Phase-sweep cosine
// ---------------------------------------------------------------------------

/// Least-squares fit of S = c0 - c/2 + (c/2) cos(phi + phi0) with c >= 0.
inline FitResult fit_cosine(std::span<const double> phases, std::span<const double> signal) {
    detail::require_same_length(phases, signal);
    const auto n = phases.size();
    if (n < 4) throw FitError("cosine fit needs at least 4 points");
    const auto [lo, hi] = std::minmax_element(phases.begin(), phases.end());
    const double span = *hi - *lo;
    const double needed = 2.0 * std::numbers::pi * (1.0 - 1.0 / static_cast<double>(n)) - 1e-9;
    if (span < needed) throw FitError("phase sweep must span one full period");

    Eigen::MatrixXd J(static_cast<Eigen::Index>(n), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        J(r, 0) = 1.0;
        J(r, 1) = std::cos(phases[i]);
        J(r, 2) = std::sin(phases[i]);
        y(r) = signal[i];
    }
    const auto sol = solve_linear_least_squares(J, y);
    if (sol.rank < 3) throw FitError("phase sweep is degenerate");
    const double k = sol.x(0), p = sol.x(1), q = sol.x(2);
    // S = k + p cos(phi) + q sin(phi), with p = (c/2) cos(phi0), q = -(c/2) sin(phi0).
    const double half = std::hypot(p, q);
    FitResult out;
    out.model = "cosine";
    out.points_used = n;
    out.residual_norm = sol.residual_norm;
    const double scale = std::max(std::abs(k), 1.0);
    const bool flat = half <= 1e-12 * scale;
    const double phi0 = flat ? 0.0 : std::atan2(-q, p);
    if (flat) out.flags.push_back("phase_unconstrained");
    out.parameters = {{"c_max", 2.0 * half}, {"phi0", phi0}, {"c0", k + half}};
    // Jacobian of (c, phi0, c0) with respect to (k, p, q).
    Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
    if (!flat) {
        G(0, 1) = 2.0 * p / half;
        G(0, 2) = 2.0 * q / half;
        G(1, 1) = q / (half * half);
        G(1, 2) = -p / (half * half);
        G(2, 1) = p / half;
        G(2, 2) = q / half;
    }
    G(2, 0) = 1.0;
    out.covariance = G * sol.covariance * G.transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Exponential decay
// ---------------------------------------------------------------------------

inline constexpr std::size_t default_skip_initial = 3;

/// Fit of S(t) = c0 exp(-t / T2) after dropping the first `skip_initial` points.
inline FitResult fit_exponential(std::span<const double> times, std::span<const double> amplitudes,
                                 std::size_t skip_initial = default_skip_initial) {
    detail::require_same_length(times, amplitudes);
    if (times.size() < skip_initial + 5) throw FitError("exponential fit needs at least 5 points after skipping");
    const auto t = times.subspan(skip_initial);
    const auto a = amplitudes.subspan(skip_initial);
    const auto n = static_cast<Eigen::Index>(t.size());

    // Log-linear start on the positive points.
    std::vector<double> lt, la;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (a[i] > 0.0) {
            lt.push_back(t[i]);
            la.push_back(std::log(a[i]));
        }
    }
    if (lt.size() < 2) throw FitError("exponential fit needs positive amplitudes");
    Eigen::MatrixXd L(static_cast<Eigen::Index>(lt.size()), 2);
    Eigen::VectorXd ly(static_cast<Eigen::Index>(lt.size()));
    for (std::size_t i = 0; i < lt.size(); ++i) {
        L(static_cast<Eigen::Index>(i), 0) = 1.0;
        L(static_cast<Eigen::Index>(i), 1) = -lt[i];
        ly(static_cast<Eigen::Index>(i)) = la[i];
    }
    const auto start = solve_linear_least_squares(L, ly);
    if (!(start.x(1) > 0.0)) throw FitError("data does not decay");

    // Parameters (c0, k) with k = 1/T2; time is scaled to keep J well conditioned.
    const double t_scale = std::max(std::abs(t.back()), 1e-300);
    Eigen::VectorXd x(2);
    x << std::exp(start.x(0)), start.x(1) * t_scale;
    const auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
        r.resize(n);
        J.resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double s = t[static_cast<std::size_t>(i)] / t_scale;
            const double e = std::exp(-p(1) * s);
            r(i) = p(0) * e - a[static_cast<std::size_t>(i)];
            J(i, 0) = e;
            J(i, 1) = -p(0) * s * e;
        }
    };
    const auto sol = levenberg_marquardt(x, residuals);
    const double k = sol.x(1) / t_scale;
    if (!(k > 0.0) || !std::isfinite(k)) throw FitError("data does not decay");

    FitResult out;
    out.model = "exponential";
    out.points_used = t.size();
    out.skip_initial = skip_initial;
    out.residual_norm = sol.residual_norm;
    out.parameters = {{"c0", sol.x(0)}, {"T2", 1.0 / k}};
    // d(T2)/d(k_scaled) = -t_scale / k_scaled^2
    Eigen::Matrix2d G = Eigen::Matrix2d::Zero();
    G(0, 0) = 1.0;
    G(1, 1) = -t_scale / (sol.x(1) * sol.x(1));
    out.covariance = G * sol.covariance * G.transpose();
    if (!sol.converged) out.flags.push_back("not_converged");
    return out;
}

/// Decay rate 1/T2 from a decay scan.
inline double decay_rate(const EnsembleSignal& scan, std::size_t skip_initial = default_skip_initial) {
    return 1.0 / fit_exponential(scan.axis, scan.values, skip_initial).get("T2");
}

// ---------------------------------------------------------------------------
// Pulse-location rates
// ---------------------------------------------------------------------------

struct RateRow {
    LevelPair pair;
    FlipPairing ms;
    double tau_over_t = 0.0;
    double rate = 0.0; // 1/s
};

struct RateTable {
    std::vector<RateRow> rows;

    std::vector<double> tau_over_t() const {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(r.tau_over_t);
        return v;
    }
    std::vector<double> rates() const {
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(r.rate);
        return v;
    }
    void validate() const {
        for (const auto& r : rows) {
            if (!(r.rate > 0.0)) throw DomainError("rate table entries must be positive");
        }
    }
};

struct VeeOptions {
    /// Soft-L1 loss rho(z) = 2 (sqrt(1 + z) - 1) on (residual / f_scale)^2.
    bool robust = false;
    double f_scale = 0.0; // 0 selects the median absolute deviation of the rates
    int irls_iterations = 50;
};

/// Fit of rate = a |x - r| + baseline (a >= 0). The vertex r is where the two
/// linear branches cross; it does not depend on the baseline.
inline FitResult fit_vee(std::span<const double> x, std::span<const double> rate, const VeeOptions& opt = {}) {
    detail::require_same_length(x, rate);
    const std::size_t n = x.size();
    if (n < 6) throw FitError("V fit needs at least 6 points");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = x[order[i]];
        ys[i] = rate[order[i]];
    }

    double f_scale = opt.f_scale;
    if (opt.robust && f_scale <= 0.0) {
        std::vector<double> dev(ys);
        std::nth_element(dev.begin(), dev.begin() + static_cast<long>(n / 2), dev.end());
        const double med = dev[n / 2];
        for (auto& d : dev) d = std::abs(d - med);
        std::nth_element(dev.begin(), dev.begin() + static_cast<long>(n / 2), dev.end());
        f_scale = std::max(dev[n / 2] * 1.4826 * 0.1, 1e-12);
    }

    struct Candidate {
        double cost = INFINITY;
        double r = 0.0, a = 0.0, baseline = 0.0;
        Eigen::MatrixXd cov;
        double residual_norm = 0.0;
    };
    Candidate best;
    // Vertex between xs[j] and xs[j+1], at least two points on each side.
    for (std::size_t j = 1; j + 2 < n; ++j) {
        if (xs[j] == xs[j + 1]) continue;
        Eigen::MatrixXd J(static_cast<Eigen::Index>(n), 3);
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        // Left branch: u - a x, right branch: a x - v, with u = a r + b, v = a r - b.
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const bool left = i <= j;
            J(row, 0) = left ? -xs[i] : xs[i];
            J(row, 1) = left ? 1.0 : 0.0;
            J(row, 2) = left ? 0.0 : -1.0;
            y(row) = ys[i];
        }
        Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
        LinearSolution sol = solve_linear_least_squares(J, y, &w);
        if (opt.robust) {
            for (int it = 0; it < opt.irls_iterations; ++it) {
                const Eigen::VectorXd res = J * sol.x - y;
                for (Eigen::Index i = 0; i < res.size(); ++i) {
                    const double z = (res(i) / f_scale) * (res(i) / f_scale);
                    w(i) = std::pow(1.0 + z, -0.25); // sqrt of the soft-L1 IRLS weight
                }
                sol = solve_linear_least_squares(J, y, &w);
            }
        }
        if (sol.rank < 3) continue;
        const double a = sol.x(0), u = sol.x(1), v = sol.x(2);
        if (!(a > 0.0)) continue;
        double r = (u + v) / (2.0 * a);
        if (r < xs[j] || r > xs[j + 1]) continue;
        const double b = 0.5 * (u - v);
        const Eigen::VectorXd res = J * sol.x - y;
        double cost = 0.0;
        for (Eigen::Index i = 0; i < res.size(); ++i) {
            cost += opt.robust ? 2.0 * (std::sqrt(1.0 + (res(i) / f_scale) * (res(i) / f_scale)) - 1.0) : res(i) * res(i);
        }
        if (cost < best.cost) {
            // (r, a, b) from (a, u, v)
            Eigen::Matrix3d G;
            G << -(u + v) / (2.0 * a * a), 1.0 / (2.0 * a), 1.0 / (2.0 * a),
                1.0, 0.0, 0.0,
                0.0, 0.5, -0.5;
            best = {cost, r, a, b, G * sol.covariance * G.transpose(), res.norm()};
        }
    }
    if (!std::isfinite(best.cost)) {
        throw FitError("rates do not straddle a V vertex; extend the tau/t grid on both sides of the minimum");
    }
    FitResult out;
    out.model = "vee";
    out.points_used = n;
    out.residual_norm = best.residual_norm;
    out.parameters = {{"ratio", best.r}, {"slope", best.a}, {"baseline", best.baseline}};
    out.covariance = best.cov;
    if (!(best.r > 0.0 && best.r < 1.0)) out.flags.push_back("ratio_outside_unit_interval");
    if (best.baseline < 0.0) out.flags.push_back("negative_baseline");
    if (opt.robust) out.flags.push_back("soft_l1");
    return out;
}

inline FitResult fit_vee(const RateTable& table, const VeeOptions& opt = {}) {
    table.validate();
    return fit_vee(table.tau_over_t(), table.rates(), opt);
}

/// Straight line rate = slope x + intercept; reports the x-axis intercept
/// -intercept/slope. With a residual baseline in the rates this estimate is
/// shifted by -baseline/slope relative to the noise-free intercept.
inline FitResult fit_line_intercept(std::span<const double> x, std::span<const double> rate) {
    detail::require_same_length(x, rate);
    if (x.size() < 3) throw FitError("line fit needs at least 3 points");
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd J(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        J(i, 0) = x[static_cast<std::size_t>(i)];
        J(i, 1) = 1.0;
        y(i) = rate[static_cast<std::size_t>(i)];
    }
    const auto sol = solve_linear_least_squares(J, y);
    if (sol.rank < 2) throw FitError("line fit is degenerate");
    const double m = sol.x(0), c = sol.x(1);
    if (m == 0.0) throw FitError("line has zero slope; no x intercept");
    FitResult out;
    out.model = "line";
    out.points_used = x.size();
    out.residual_norm = sol.residual_norm;
    out.parameters = {{"slope", m}, {"intercept", c}, {"x_intercept", -c / m}};
    Eigen::MatrixXd G(3, 2);
    G << 1.0, 0.0, 0.0, 1.0, c / (m * m), -1.0 / m;
    out.covariance = G * sol.covariance * G.transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Noise widths
// ---------------------------------------------------------------------------

struct SigmaEstimate {
    double sigma = 0.0;
    double uncertainty = 0.0;
    bool below_baseline = false;
};

/// sigma = (rate - baseline) / |coefficient|, with coefficient the rate per
/// unit sigma (e.g. |alpha_Q| for an m_S = 0 Ramsey under temperature noise).
inline SigmaEstimate estimate_sigma(double rate, double coefficient, double baseline = 0.0, double rate_variance = 0.0) {
    if (coefficient == 0.0) throw DomainError("coefficient must be nonzero");
    SigmaEstimate out;
    const double c = std::abs(coefficient);
    if (rate <= baseline) {
        out.below_baseline = true;
        return out;
    }
    out.sigma = (rate - baseline) / c;
    out.uncertainty = std::sqrt(std::max(rate_variance, 0.0)) / c;
    return out;
}

/// One measured rate and the per-source rate coefficients |c_j| (rate per unit
/// sigma_j) of the sequence that produced it.
struct RateEquation {
    double rate = 0.0;
    std::vector<double> coefficients;
};

struct MultiSigmaEstimate {
    std::vector<double> sigma;
    Eigen::MatrixXd covariance;
    double residual_norm = 0.0;
};

/// Least-squares solution of rate_k - baseline = sum_j |c_kj| sigma_j.
inline MultiSigmaEstimate estimate_sigmas(std::span<const RateEquation> equations, double baseline = 0.0) {
    if (equations.empty()) throw FitError("no rate equations");
    const auto m = equations.front().coefficients.size();
    if (m == 0) throw FitError("rate equations need at least one source");
    if (equations.size() < m) throw FitError("fewer rate equations than sources");
    Eigen::MatrixXd J(static_cast<Eigen::Index>(equations.size()), static_cast<Eigen::Index>(m));
    Eigen::VectorXd y(static_cast<Eigen::Index>(equations.size()));
    for (std::size_t k = 0; k < equations.size(); ++k) {
        if (equations[k].coefficients.size() != m) throw FitError("rate equations disagree on source count");
        for (std::size_t j = 0; j < m; ++j) J(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = std::abs(equations[k].coefficients[j]);
        y(static_cast<Eigen::Index>(k)) = equations[k].rate - baseline;
    }
    const auto sol = solve_linear_least_squares(J, y);
    if (sol.rank < static_cast<Eigen::Index>(m)) throw FitError("sources cannot be distinguished by these sequences");
    MultiSigmaEstimate out;
    out.sigma.assign(sol.x.data(), sol.x.data() + sol.x.size());
    out.covariance = sol.covariance;
    out.residual_norm = sol.residual_norm;
    return out;
}

// ---------------------------------------------------------------------------
// Spectroscopy
// ---------------------------------------------------------------------------

struct InteractionMagnitudeShift {
    double dQ_abs = 0.0;   // shift of |Q|, rad/s
    double dA_abs = 0.0;   // shift of |A_zz|, rad/s
};

/// d|Q| = (dw1 + dw2)/2 and d|A_zz| = (dw4 + dw5 - dw3 - dw6)/4, the
/// normalizations fixed by w1 + w2 = 2|Q| and w4 + w5 - w3 - w6 = 4|A_zz|.
inline InteractionMagnitudeShift extract_interaction_shifts(const std::array<double, 6>& dw) {
    return {(dw[0] + dw[1]) / 2.0, (dw[3] + dw[4] - dw[2] - dw[5]) / 4.0};
}

/// Transition shifts produced by magnitude shifts of |Q| and |A_zz| alone.
inline std::array<double, 6> synthesize_transition_shifts(const InteractionMagnitudeShift& s) {
    return {s.dQ_abs, s.dQ_abs, s.dQ_abs - s.dA_abs, s.dQ_abs + s.dA_abs, s.dQ_abs + s.dA_abs, s.dQ_abs - s.dA_abs};
}

/// Shifts of the six transitions relative to the unshifted Hamiltonian.
inline std::array<double, 6> transition_shifts(const SpinSystemParams& p, const InteractionShift& s) {
    const auto base = sq_transition_frequencies(p);
    const auto moved = sq_transition_frequencies(p, s);
    std::array<double, 6> out{};
    for (std::size_t k = 0; k < 6; ++k) out[k] = moved[k] - base[k];
    return out;
}

inline constexpr double zfs_temperature_slope = -khz(77.7);

/// Temperature change from a zero-field-splitting shift.
inline double temperature_from_zfs(double delta_D, double dD_dT = zfs_temperature_slope) {
    if (dD_dT == 0.0) throw DomainError("dD/dT must be nonzero");
    return delta_D / dD_dT;
}

// ---------------------------------------------------------------------------
// Rate predictions
// ---------------------------------------------------------------------------

enum class RateKind { nuclear_sq, nuclear_dq, electronic_sq };

struct RateQuery {
    RateKind kind = RateKind::nuclear_sq;
    int m_I = 1;  // SQ state (|0> + |m_I>)/sqrt(2)
    int m_S = 0;
};

/// Temperature-induced electronic/nuclear scaling 3.6 dQ/Q = dD/D.
inline constexpr double zfs_quadrupole_scaling = 3.6;

/// Dephasing rates (1/s) under Lorentzian temperature (sigma_T) and field
/// (sigma_B) inhomogeneity:
///   nuclear SQ:  |alpha_Q + m_I m_S alpha_A| sigma_T + |gamma_n| sigma_B
///   nuclear DQ:  2 |gamma_n| sigma_B + 2 |m_S alpha_A| sigma_T
///   electronic SQ (order of magnitude only, ignores the spin bath):
///     3.6 (D/|Q|) * nuclear SQ rate at m_S = 0  +  |gamma_e| sigma_B
inline double predict_rate(const RateQuery& q, double sigma_T, double sigma_B, const LinearResponse& resp = LinearResponse::defaults(),
                           const SpinSystemParams& p = {}) {
    require_quantum_number(q.m_S, "m_S");
    if (sigma_T < 0.0 || sigma_B < 0.0) throw DomainError("noise widths must be non-negative");
    switch (q.kind) {
    case RateKind::nuclear_sq:
        if (q.m_I != 1 && q.m_I != -1) throw DomainError("SQ state needs m_I = +1 or -1");
        return std::abs(resp.alpha_Q + q.m_I * q.m_S * resp.alpha_A) * sigma_T + std::abs(p.gamma_n) * sigma_B;
    case RateKind::nuclear_dq:
        return 2.0 * std::abs(p.gamma_n) * sigma_B + 2.0 * std::abs(q.m_S * resp.alpha_A) * sigma_T;
    case RateKind::electronic_sq: {
        const double nuclear = std::abs(resp.alpha_Q) * sigma_T + std::abs(p.gamma_n) * sigma_B;
        return zfs_quadrupole_scaling * (p.D / std::abs(p.Q)) * nuclear + std::abs(p.gamma_e) * sigma_B;
    }
    }
    return 0.0;
}

} // namespace nvecho
