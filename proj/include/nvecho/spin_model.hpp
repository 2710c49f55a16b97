#pragma once

// Nuclear-spin energy levels of the 14N in an NV center with the electronic spin
// frozen in an m_S eigenstate, and phase accumulation over piecewise-constant
// electronic-spin timelines.
//
// Sign convention: a superposition (|ref> + |target>)/sqrt(2) acquires the
// relative phase phi = -sum_k dt_k * [E(target; m_S,k) - E(ref; m_S,k)].
// For the (0,-1) pair with segments [(t - tau, m_S = 0), (tau, m_S = +1)] this is
// phi = -t Q + tau A_zz + gamma_n B t.

#include <array>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "units.hpp"

namespace nvecho {

/// Static Hamiltonian constants, all in rad/s (gyromagnetic ratios in rad/s/G).
struct SpinSystemParams {
    double D = ghz(2.87);
    double Q = -mhz(4.945);
    double A_zz = -mhz(2.16);
    double gamma_e = mhz(2.8025);
    double gamma_n = -khz(0.3077);
    double B = 239.0; // G

    double nuclear_zeeman() const noexcept { return gamma_n * B; }

    void validate() const {
        if (!(D > 0.0)) throw DomainError("zero-field splitting D must be positive");
        for (double v : {D, Q, A_zz, gamma_e, gamma_n, B}) {
            if (!std::isfinite(v)) throw DomainError("spin parameters must be finite");
        }
    }

    /// |A_zz| < |Q| and |gamma_n B| < |Q|: the regime where the six closed-form
    /// transition formulas hold.
    bool in_level_ordering_regime() const noexcept {
        return std::abs(A_zz) < std::abs(Q) && std::abs(nuclear_zeeman()) < std::abs(Q);
    }

    bool operator==(const SpinSystemParams&) const = default;
};

/// Shifts of the interaction constants away from their static values (rad/s).
struct InteractionShift {
    double dQ = 0.0;
    double dA_zz = 0.0;
    double dD = 0.0;
    /// Shift of the nuclear Zeeman term gamma_n * B caused by a field offset.
    double dZeeman = 0.0;

    InteractionShift& operator+=(const InteractionShift& o) noexcept {
        dQ += o.dQ;
        dA_zz += o.dA_zz;
        dD += o.dD;
        dZeeman += o.dZeeman;
        return *this;
    }
    friend InteractionShift operator+(InteractionShift a, const InteractionShift& b) noexcept { return a += b; }
    friend InteractionShift operator*(double s, const InteractionShift& a) noexcept {
        return {s * a.dQ, s * a.dA_zz, s * a.dD, s * a.dZeeman};
    }

    bool finite() const noexcept {
        return std::isfinite(dQ) && std::isfinite(dA_zz) && std::isfinite(dD) && std::isfinite(dZeeman);
    }

    bool operator==(const InteractionShift&) const = default;
};

inline bool valid_quantum_number(int m) noexcept { return m >= -1 && m <= 1; }

inline void require_quantum_number(int m, const char* what) {
    if (!valid_quantum_number(m)) {
        throw DomainError(std::string(what) + " must be -1, 0 or +1 (got " + std::to_string(m) + ")");
    }
}

/// The two nuclear levels whose superposition is tracked.
struct LevelPair {
    int reference = 0;
    int target = -1;

    constexpr bool is_double_quantum() const noexcept {
        return (reference == -1 && target == 1) || (reference == 1 && target == -1);
    }

    void validate() const {
        require_quantum_number(reference, "reference m_I");
        require_quantum_number(target, "target m_I");
        if (reference == target) throw DomainError("level pair needs two distinct m_I values");
    }

    bool operator==(const LevelPair&) const = default;
};

inline constexpr LevelPair sq_minus{0, -1};
inline constexpr LevelPair sq_plus{0, 1};
inline constexpr LevelPair dq_pair{-1, 1};

/// Environmental deviation from the operating point held during a segment.
struct EnvironmentOffset {
    double dT = 0.0;      // K
    double strain = 0.0;  // dimensionless
    double dB = 0.0;      // G

    bool operator==(const EnvironmentOffset&) const = default;
};

struct Segment {
    double duration = 0.0; // s
    int ms = 0;
    EnvironmentOffset environment{};
    /// True after a nuclear pi pulse: the accumulated relative phase is negated.
    bool nuclear_inverted = false;

    bool operator==(const Segment&) const = default;
};

/// Eigenvalue of the secular nuclear Hamiltonian Q I_z^2 + m_S A_zz I_z + gamma_n B I_z.
inline double level_energy(int m_I, int m_S, const SpinSystemParams& p, const InteractionShift& s = {}) {
    require_quantum_number(m_I, "m_I");
    require_quantum_number(m_S, "m_S");
    const double mi = m_I;
    return (p.Q + s.dQ) * mi * mi + m_S * (p.A_zz + s.dA_zz) * mi + (p.nuclear_zeeman() + s.dZeeman) * mi;
}

inline double transition_frequency(const LevelPair& pair, int m_S, const SpinSystemParams& p,
                                   const InteractionShift& s = {}) {
    pair.validate();
    return std::abs(level_energy(pair.target, m_S, p, s) - level_energy(pair.reference, m_S, p, s));
}

/// (m_S, m_I) of the single-quantum transitions omega_1 ... omega_6 (transition
/// |0> <-> |m_I>). The labelling matches the closed-form list
/// |Q|+-|gB|, |Q|-+|A|+-|gB|, |Q|+-|A|+-|gB| for Q, A_zz, gamma_n all negative.
struct SqTransitionLabel {
    int ms;
    int mi;
};

inline constexpr std::array<SqTransitionLabel, 6> sq_transition_labels{{
    {0, +1}, {0, -1}, {-1, +1}, {-1, -1}, {+1, +1}, {+1, -1},
}};

inline std::array<double, 6> sq_transition_frequencies(const SpinSystemParams& p, const InteractionShift& s = {}) {
    std::array<double, 6> out{};
    for (std::size_t k = 0; k < 6; ++k) {
        const auto [ms, mi] = sq_transition_labels[k];
        out[k] = transition_frequency(LevelPair{0, mi}, ms, p, s);
    }
    return out;
}

inline void require_valid_segments(std::span<const Segment> segments) {
    for (const auto& seg : segments) {
        if (!(seg.duration >= 0.0) || !std::isfinite(seg.duration)) {
            throw DomainError("segment duration must be finite and non-negative (got " +
                              format_number(seg.duration) + " s)");
        }
        require_quantum_number(seg.ms, "segment m_S");
    }
}

template <class F>
concept ShiftFunction = std::invocable<const F&, const EnvironmentOffset&> &&
                        std::convertible_to<std::invoke_result_t<const F&, const EnvironmentOffset&>, InteractionShift>;

/// Total relative phase of the superposition over the segment list, with the
/// interaction shifts in each segment supplied by `response`.
template <ShiftFunction Response>
double accumulated_phase(std::span<const Segment> segments, const LevelPair& pair, const SpinSystemParams& p,
                         const Response& response) {
    pair.validate();
    require_valid_segments(segments);
    double phi = 0.0;
    for (const auto& seg : segments) {
        const InteractionShift s = response(seg.environment);
        const double splitting = level_energy(pair.target, seg.ms, p, s) - level_energy(pair.reference, seg.ms, p, s);
        phi += (seg.nuclear_inverted ? 1.0 : -1.0) * seg.duration * splitting;
    }
    return phi;
}

inline double accumulated_phase(std::span<const Segment> segments, const LevelPair& pair, const SpinSystemParams& p) {
    return accumulated_phase(segments, pair, p, [](const EnvironmentOffset&) { return InteractionShift{}; });
}

/// Linear decomposition of the accumulated phase for a sequence whose
/// environment is the same in every segment:
///   phi = static_phase + quadrupole * dQ + hyperfine * dA_zz + zeeman * dZeeman.
struct PhaseWeights {
    double static_phase = 0.0; // rad
    double quadrupole = 0.0;   // rad per rad/s (i.e. seconds)
    double hyperfine = 0.0;
    double zeeman = 0.0;

    double phase(const InteractionShift& s) const noexcept {
        return static_phase + quadrupole * s.dQ + hyperfine * s.dA_zz + zeeman * s.dZeeman;
    }
    double fluctuation(const InteractionShift& s) const noexcept {
        return quadrupole * s.dQ + hyperfine * s.dA_zz + zeeman * s.dZeeman;
    }
};

inline PhaseWeights phase_weights(std::span<const Segment> segments, const LevelPair& pair, const SpinSystemParams& p) {
    pair.validate();
    require_valid_segments(segments);
    const double dm2 = static_cast<double>(pair.target * pair.target - pair.reference * pair.reference);
    const double dm = static_cast<double>(pair.target - pair.reference);
    PhaseWeights w;
    for (const auto& seg : segments) {
        const double sign = seg.nuclear_inverted ? 1.0 : -1.0;
        w.quadrupole += sign * seg.duration * dm2;
        w.hyperfine += sign * seg.duration * seg.ms * dm;
        w.zeeman += sign * seg.duration * dm;
    }
    w.static_phase = w.quadrupole * p.Q + w.hyperfine * p.A_zz + w.zeeman * p.nuclear_zeeman();
    return w;
}

} // namespace nvecho
