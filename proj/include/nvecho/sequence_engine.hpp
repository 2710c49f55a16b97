#pragma once

// Pulse sequences (Ramsey, DQ Ramsey, nuclear echo, unbalanced echo) and their
// ensemble simulation. Pulses are instantaneous; a sequence is a list of
// free-evolution segments with the electronic spin in a fixed m_S.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "noise_ensemble.hpp"
#include "response_model.hpp"
#include "spin_model.hpp"

namespace nvecho {

enum class SequenceKind { ramsey, dq_ramsey, nuclear_echo, unbalanced_echo };

inline std::string to_string(SequenceKind k) {
    switch (k) {
    case SequenceKind::ramsey: return "ramsey";
    case SequenceKind::dq_ramsey: return "dq_ramsey";
    case SequenceKind::nuclear_echo: return "nuclear_echo";
    case SequenceKind::unbalanced_echo: return "unbalanced_echo";
    }
    return "?";
}

struct PulseSequence {
    SequenceKind kind = SequenceKind::ramsey;
    LevelPair pair = sq_minus;
    std::vector<Segment> segments;
    std::optional<double> nuclear_flip_at;

    double total_duration() const noexcept {
        double t = 0.0;
        for (const auto& s : segments) t += s.duration;
        return t;
    }

    void validate() const {
        pair.validate();
        require_valid_segments(segments);
        if (!(total_duration() > 0.0)) throw DomainError("sequence duration must be positive");
        if (kind == SequenceKind::unbalanced_echo) {
            if (segments.size() != 2 || segments[0].ms == segments[1].ms) {
                throw DomainError("unbalanced echo needs exactly two segments with distinct m_S");
            }
        }
        if (kind == SequenceKind::dq_ramsey && !pair.is_double_quantum()) {
            throw DomainError("double-quantum Ramsey tracks the (-1, +1) pair");
        }
        if (kind == SequenceKind::nuclear_echo && !nuclear_flip_at) {
            throw DomainError("nuclear echo needs a flip time");
        }
    }

    bool operator==(const PulseSequence&) const = default;
};

inline PulseSequence build_ramsey(double t, const LevelPair& pair, int ms) {
    PulseSequence s{SequenceKind::ramsey, pair, {Segment{t, ms}}, std::nullopt};
    s.validate();
    return s;
}

inline PulseSequence build_dq_ramsey(double t, int ms = 0) {
    PulseSequence s{SequenceKind::dq_ramsey, dq_pair, {Segment{t, ms}}, std::nullopt};
    s.validate();
    return s;
}

/// Nuclear pi pulse at `flip_at` (defaults to t/2); evolution after the pulse
/// accumulates phase with the opposite sign.
inline PulseSequence build_nuclear_echo(double t, const LevelPair& pair, int ms, std::optional<double> flip_at = {}) {
    const double at = flip_at.value_or(0.5 * t);
    if (!(at >= 0.0 && at <= t)) throw DomainError("nuclear flip time must lie inside the evolution");
    PulseSequence s{SequenceKind::nuclear_echo, pair, {Segment{at, ms}, Segment{t - at, ms, {}, true}}, at};
    s.validate();
    return s;
}

/// Electronic flip at t - tau: segments [(t - tau, ms_free), (tau, ms_flipped)].
/// tau = 0 is Ramsey under ms_free; tau = t is Ramsey under ms_flipped.
inline PulseSequence build_unbalanced_echo(double t, double tau, const LevelPair& pair, int ms_free, int ms_flipped) {
    if (!(tau >= 0.0)) throw DomainError("flip offset tau must be non-negative");
    if (tau > t) throw DomainError("flip offset tau must not exceed the evolution time t");
    if (ms_free == ms_flipped) throw DomainError("the electronic flip must change m_S");
    PulseSequence s{SequenceKind::unbalanced_echo, pair, {Segment{t - tau, ms_free}, Segment{tau, ms_flipped}}, std::nullopt};
    s.validate();
    return s;
}

/// Residual (non-temperature) decoherence as a Lorentzian field source whose
/// single-quantum rate |gamma_n| sigma_B equals `sq_rate` (1/s).
inline NoiseSource residual_field_source(double sq_rate, double gamma_n = SpinSystemParams{}.gamma_n) {
    if (!(sq_rate >= 0.0)) throw DomainError("residual rate must be non-negative");
    return {NoiseVariable::field, Distribution::lorentzian(0.0, sq_rate / std::abs(gamma_n))};
}

/// 1/(2 * 3.9 ms): half of the measured double-quantum dephasing rate.
inline constexpr double default_residual_sq_rate = 1.0 / (2.0 * 3.9e-3);

enum class Backend { closed_form, monte_carlo };

inline std::string to_string(Backend b) { return b == Backend::closed_form ? "closed_form" : "monte_carlo"; }

struct BackendConfig {
    Backend backend = Backend::closed_form;
    McConfig mc{};
    /// Cauchy truncation half-width (in units of sigma) on the nonlinear path.
    double truncation_sigmas = 50.0;

    bool operator==(const BackendConfig&) const = default;
};

/// Everything that describes the ensemble: Hamiltonian constants, response, and
/// the independent noise sources.
struct Ensemble {
    SpinSystemParams params{};
    ResponseModel response{};
    std::vector<NoiseSource> sources;
};

struct AmplitudeResult {
    /// <exp(i delta phi)> over the ensemble.
    std::complex<double> average{1.0, 0.0};
    /// Phase at zero noise.
    double static_phase = 0.0;
    std::size_t samples = 0;
    std::vector<double> truncated_mass;

    double amplitude() const noexcept { return std::abs(average); }
};

/// Coupling of one source to the relative phase when the response is linear:
/// the phase fluctuation is coefficient * x for a deviation x.
inline double linear_phase_coefficient(const NoiseSource& src, const PhaseWeights& w, const ResponseModel& r) {
    switch (src.variable) {
    case NoiseVariable::temperature: return w.fluctuation(r.linear.temperature_shift(1.0));
    case NoiseVariable::strain: return w.fluctuation(r.linear.strain_shift(1.0));
    case NoiseVariable::field: return w.zeeman * r.gamma_n;
    }
    return 0.0;
}

namespace detail {

inline EnvironmentOffset with_deviation(EnvironmentOffset env, NoiseVariable v, double x) noexcept {
    switch (v) {
    case NoiseVariable::temperature: env.dT += x; break;
    case NoiseVariable::strain: env.strain += x; break;
    case NoiseVariable::field: env.dB += x; break;
    }
    return env;
}

inline std::optional<Interval> truncation_for(const NoiseSource& src, const ResponseModel& r, double n_sigma) {
    if (src.variable != NoiseVariable::temperature || r.is_linear()) return std::nullopt;
    Interval cut;
    cut.lo = -r.reference_T();
    if (src.dist.kind == DistributionKind::lorentzian) {
        cut.lo = std::max(cut.lo, src.dist.mu - n_sigma * src.dist.sigma);
        cut.hi = src.dist.mu + n_sigma * src.dist.sigma;
    }
    return cut;
}

} // namespace detail

inline AmplitudeResult simulate_amplitude(const PulseSequence& seq, const Ensemble& ens, const BackendConfig& backend = {}) {
    seq.validate();
    ens.params.validate();
    const auto& r = ens.response;
    AmplitudeResult out;
    out.static_phase = accumulated_phase(seq.segments, seq.pair, ens.params, r);

    if (backend.backend == Backend::closed_form) {
        if (!r.is_linear()) throw UsageError("the closed-form backend requires a linear response model; use monte_carlo");
        const PhaseWeights w = phase_weights(seq.segments, seq.pair, ens.params);
        std::vector<double> coeffs;
        coeffs.reserve(ens.sources.size());
        for (const auto& src : ens.sources) coeffs.push_back(linear_phase_coefficient(src, w, r));
        out.average = dephasing_factor(ens.sources, coeffs);
        out.truncated_mass.assign(ens.sources.size(), 0.0);
        return out;
    }

    // Per-segment weights so that static environment offsets in individual
    // segments are honoured on the nonlinear path.
    struct SegmentTerm {
        PhaseWeights weights;
        EnvironmentOffset env;
        InteractionShift base;
    };
    std::vector<SegmentTerm> terms;
    for (const auto& seg : seq.segments) {
        if (seg.duration == 0.0) continue;
        const Segment one[] = {seg};
        if (!terms.empty() && terms.back().env == seg.environment) {
            const auto w = phase_weights(one, seq.pair, ens.params);
            terms.back().weights.quadrupole += w.quadrupole;
            terms.back().weights.hyperfine += w.hyperfine;
            terms.back().weights.zeeman += w.zeeman;
            continue;
        }
        terms.push_back({phase_weights(one, seq.pair, ens.params), seg.environment, r(seg.environment)});
    }
    std::vector<std::optional<Interval>> cuts;
    for (const auto& src : ens.sources) cuts.push_back(detail::truncation_for(src, r, backend.truncation_sigmas));

    const auto phase = [&](std::span<const double> x) {
        double dphi = 0.0;
        for (const auto& term : terms) {
            EnvironmentOffset env = term.env;
            for (std::size_t j = 0; j < x.size(); ++j) env = detail::with_deviation(env, ens.sources[j].variable, x[j]);
            InteractionShift s = r(env);
            s.dQ -= term.base.dQ;
            s.dA_zz -= term.base.dA_zz;
            s.dZeeman -= term.base.dZeeman;
            dphi += term.weights.fluctuation(s);
        }
        return dphi;
    };
    const auto mc = ensemble_average(ens.sources, cuts, backend.mc, phase);
    out.average = mc.mean;
    out.samples = mc.samples;
    out.truncated_mass = mc.truncated_mass;
    return out;
}

// ---------------------------------------------------------------------------
// Signals and sweeps
// ---------------------------------------------------------------------------

/// Simulated or ingested signal with the metadata needed to fit it later.
struct EnsembleSignal {
    std::string axis_name;
    std::string value_name;
    std::vector<double> axis;
    std::vector<double> values;
    /// Ordered key/value metadata (sequence kind, backend, seed, ...).
    std::vector<std::pair<std::string, std::string>> metadata;

    void validate() const {
        if (axis.size() != values.size()) throw DomainError("signal axis and values differ in length");
        for (double v : values) {
            if (!std::isfinite(v)) throw DomainError("signal values must be finite");
        }
    }

    std::string meta(const std::string& key) const {
        for (const auto& [k, v] : metadata) {
            if (k == key) return v;
        }
        return {};
    }
    void set_meta(const std::string& key, std::string value) {
        for (auto& [k, v] : metadata) {
            if (k == key) {
                v = std::move(value);
                return;
            }
        }
        metadata.emplace_back(key, std::move(value));
    }
};

inline std::string describe_sources(std::span<const NoiseSource> sources) {
    std::string out;
    for (const auto& s : sources) {
        if (!out.empty()) out += "; ";
        out += to_string(s.variable) + ":" + to_string(s.dist.kind) + "(mu=" + format_number(s.dist.mu) +
               ",sigma=" + format_number(s.dist.sigma) + ")";
    }
    return out.empty() ? "none" : out;
}

inline void fill_metadata(EnsembleSignal& sig, const std::string& kind, const Ensemble& ens, const BackendConfig& b) {
    sig.set_meta("sequence", kind);
    sig.set_meta("noise", describe_sources(ens.sources));
    sig.set_meta("response", ens.response.is_linear() ? "linear" : "quasiharmonic");
    sig.set_meta("backend", to_string(b.backend));
    if (b.backend == Backend::monte_carlo) {
        sig.set_meta("seed", std::to_string(b.mc.seed));
        sig.set_meta("samples", std::to_string(b.mc.samples));
    }
}

/// Seed for grid point `index`, independent across points.
inline BackendConfig derived_backend(const BackendConfig& b, std::size_t index) {
    BackendConfig out = b;
    out.mc.seed = splitmix64(b.mc.seed ^ splitmix64(0xA24BAED4963EE407ULL + index));
    return out;
}

/// S(phi) = c0 - c/2 + (c/2) Re[exp(i (phi + phi0)) <exp(i delta phi)>].
inline EnsembleSignal phase_sweep(const PulseSequence& seq, const Ensemble& ens, std::span<const double> phases,
                                  double contrast = 1.0, double offset = 1.0, const BackendConfig& b = {}) {
    if (phases.empty()) throw DomainError("phase sweep needs at least one phase");
    const auto amp = simulate_amplitude(seq, ens, b);
    EnsembleSignal sig{"phase_rad", "signal", {phases.begin(), phases.end()}, {}, {}};
    for (double ph : phases) {
        const auto rot = std::polar(1.0, ph + amp.static_phase) * amp.average;
        sig.values.push_back(offset - 0.5 * contrast + 0.5 * contrast * rot.real());
    }
    fill_metadata(sig, to_string(seq.kind), ens, b);
    sig.set_meta("t_s", format_number(seq.total_duration()));
    sig.set_meta("static_phase_rad", format_number(amp.static_phase));
    return sig;
}

struct FlipPairing {
    int ms_free = 0;
    int ms_flipped = 1;

    bool operator==(const FlipPairing&) const = default;
};

/// Amplitude |<exp(i delta phi)>| of unbalanced echoes at fixed t versus tau/t.
inline EnsembleSignal pulse_location_sweep(double t, std::span<const double> tau_grid, const LevelPair& pair,
                                           FlipPairing ms, const Ensemble& ens, const BackendConfig& b = {}) {
    EnsembleSignal sig{"tau_over_t", "amplitude", {tau_grid.begin(), tau_grid.end()}, {}, {}};
    sig.values.resize(tau_grid.size());
    for (std::size_t i = 0; i < tau_grid.size(); ++i) {
        const double x = tau_grid[i];
        if (!(x >= 0.0 && x <= 1.0)) throw DomainError("pulse location tau/t must lie in [0, 1]");
        const auto seq = build_unbalanced_echo(t, x * t, pair, ms.ms_free, ms.ms_flipped);
        sig.values[i] = simulate_amplitude(seq, ens, derived_backend(b, i)).amplitude();
    }
    fill_metadata(sig, "unbalanced_echo", ens, b);
    sig.set_meta("t_s", format_number(t));
    sig.set_meta("pair", std::to_string(pair.reference) + "," + std::to_string(pair.target));
    sig.set_meta("ms", std::to_string(ms.ms_free) + "->" + std::to_string(ms.ms_flipped));
    return sig;
}

/// Builds the sequence of one family at total evolution time t.
using SequenceFamily = std::function<PulseSequence(double)>;

inline SequenceFamily ramsey_family(LevelPair pair, int ms) {
    return [=](double t) { return build_ramsey(t, pair, ms); };
}
inline SequenceFamily dq_ramsey_family(int ms = 0) {
    return [=](double t) { return build_dq_ramsey(t, ms); };
}
inline SequenceFamily nuclear_echo_family(LevelPair pair, int ms) {
    return [=](double t) { return build_nuclear_echo(t, pair, ms); };
}
inline SequenceFamily unbalanced_echo_family(double tau_over_t, LevelPair pair, FlipPairing ms) {
    if (!(tau_over_t >= 0.0 && tau_over_t <= 1.0)) throw DomainError("pulse location tau/t must lie in [0, 1]");
    return [=](double t) { return build_unbalanced_echo(t, tau_over_t * t, pair, ms.ms_free, ms.ms_flipped); };
}

/// Amplitude versus total evolution time for one sequence family.
inline EnsembleSignal decay_scan(std::span<const double> t_grid, const SequenceFamily& family, const Ensemble& ens,
                                 const BackendConfig& b = {}) {
    if (t_grid.empty()) throw DomainError("decay scan needs at least one time");
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        if (!(t_grid[i] > t_grid[i - 1])) throw DomainError("decay scan times must be strictly increasing");
    }
    EnsembleSignal sig{"t_s", "amplitude", {t_grid.begin(), t_grid.end()}, {}, {}};
    std::string kind;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const auto seq = family(t_grid[i]);
        kind = to_string(seq.kind);
        sig.values.push_back(simulate_amplitude(seq, ens, derived_backend(b, i)).amplitude());
    }
    fill_metadata(sig, kind, ens, b);
    return sig;
}

/// Evenly spaced grid including both ends.
inline std::vector<double> linspace(double first, double last, std::size_t count) {
    if (count == 0) return {};
    if (count == 1) return {first};
    std::vector<double> g(count);
    for (std::size_t i = 0; i < count; ++i) {
        g[i] = first + (last - first) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    g.back() = last;
    return g;
}

inline std::size_t argmax(std::span<const double> v) {
    if (v.empty()) throw DomainError("argmax of an empty range");
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace nvecho
