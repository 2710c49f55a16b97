#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "nvecho/spin_model.hpp"

using namespace nvecho;

namespace {


Eigen::Matrix3d spin1_z() { return Eigen::Vector3d(1.0, 0.0, -1.0).asDiagonal(); }

// Full 9x9 secular Hamiltonian in the |m_S> (x) |m_I> product basis, built from
// Kronecker products of spin-1 operators; includes the electronic terms that
// level_energy omits.
Eigen::MatrixXd hamiltonian(const SpinSystemParams& p) {
    const Eigen::Matrix3d sz = spin1_z();
    const Eigen::Matrix3d id = Eigen::Matrix3d::Identity();
    const auto kron = [](const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
        Eigen::MatrixXd k(9, 9);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) k.block(3 * i, 3 * j, 3, 3) = a(i, j) * b;
        }
        return k;
    };
    return p.D * kron(sz * sz, id) + p.gamma_e * p.B * kron(sz, id) + p.Q * kron(id, sz * sz) +
           p.A_zz * kron(sz, sz) + p.gamma_n * p.B * kron(id, sz);
}

int basis_index(int ms, int mi) { return 3 * (1 - ms) + (1 - mi); }

// Eigenvalue whose eigenvector is dominated by |m_S, m_I>.
double eigen_energy(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es, int ms, int mi) {
    const int k = basis_index(ms, mi);
    Eigen::Index best = 0;
    es.eigenvectors().row(k).cwiseAbs().maxCoeff(&best);
    return es.eigenvalues()(best);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

} // namespace

TEST(LevelEnergy, Examples) {
    const SpinSystemParams p;
    const double gB = -two_pi * 0.3077e3 * 239.0;
    EXPECT_EQ(level_energy(0, 1, p), 0.0);
    EXPECT_LT(rel(level_energy(1, 0, p), -two_pi * 4.945e6 + gB), 1e-12);
    EXPECT_LT(rel(level_energy(-1, 1, p), two_pi * (-4.945e6 + 2.16e6) - gB), 1e-12);
    EXPECT_NEAR(gB / two_pi, -73.54e3, 0.01e3);
}

TEST(LevelEnergy, RejectsInvalidQuantumNumbers) {
    const SpinSystemParams p;
    EXPECT_THROW(level_energy(2, 0, p), DomainError);
    EXPECT_THROW(level_energy(0, -2, p), DomainError);
    EXPECT_THROW(transition_frequency(LevelPair{0, 0}, 0, p), DomainError);
}

TEST(LevelEnergy, MatchesNineLevelEigenOracle) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        SpinSystemParams p;
        if (trial > 0) {
            p.Q *= 1.0 + 0.3 * u(rng);
            p.A_zz *= 1.0 + 0.3 * u(rng);
            p.B = 239.0 * (1.0 + 0.5 * u(rng));
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hamiltonian(p));
        for (int ms = -1; ms <= 1; ++ms) {
            const double e0 = eigen_energy(es, ms, 0);
            for (int mi : {-1, 1}) {
                const double oracle = std::abs(eigen_energy(es, ms, mi) - e0);
                const double freq = transition_frequency(LevelPair{0, mi}, ms, p);
                EXPECT_NEAR(freq, oracle, 1e-12 * p.D)
                    << "trial " << trial << " ms " << ms << " mi " << mi;
            }
        }
    }
}

TEST(TransitionFrequency, Examples) {
    const SpinSystemParams p;
    const double gB = std::abs(p.nuclear_zeeman());
    EXPECT_LT(rel(transition_frequency(sq_minus, 0, p), two_pi * 4.945e6 - gB), 1e-12);
    EXPECT_NEAR(transition_frequency(sq_minus, 0, p) / two_pi, 4.8715e6, 0.1e3);
    EXPECT_NEAR(transition_frequency(sq_plus, 0, p) / two_pi, 5.0185e6, 0.1e3);
    EXPECT_NEAR(transition_frequency(dq_pair, 0, p) / two_pi, 147.08e3, 0.01e3);

    InteractionShift s;
    s.dA_zz = -two_pi * 204.0;
    const double shifted = transition_frequency(sq_plus, 1, p, s) - transition_frequency(sq_plus, 1, p);
    EXPECT_NEAR(std::abs(shifted), two_pi * 204.0, 1e-6);
}

TEST(TransitionFrequency, SixFrequencyMultiset) {
    const SpinSystemParams p;
    const double q = std::abs(p.Q), a = std::abs(p.A_zz), g = std::abs(p.nuclear_zeeman());
    std::array<double, 6> formula{q + g, q - g, q - a + g, q - a - g, q + a + g, q + a - g};
    auto computed = sq_transition_frequencies(p);
    std::sort(formula.begin(), formula.end());
    std::sort(computed.begin(), computed.end());
    for (std::size_t k = 0; k < 6; ++k) EXPECT_LT(rel(computed[k], formula[k]), 1e-14);
}

TEST(TransitionFrequency, LabelAssignment) {
    const SpinSystemParams p;
    const double q = std::abs(p.Q), a = std::abs(p.A_zz), g = std::abs(p.nuclear_zeeman());
    const auto w = sq_transition_frequencies(p);
    const std::array<double, 6> expected{q + g, q - g, q - a + g, q + a - g, q + a + g, q - a - g};
    for (std::size_t k = 0; k < 6; ++k) EXPECT_LT(rel(w[k], expected[k]), 1e-14) << "omega_" << k + 1;
}

TEST(TransitionFrequency, SpectroscopyIdentitiesAcrossRegime) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        SpinSystemParams p;
        p.Q = -two_pi * (1e6 + 9e6 * u(rng));
        const double room = std::abs(p.Q);
        p.A_zz = -room * 0.95 * u(rng);
        const double g = (room - std::abs(p.A_zz)) * 0.95 * u(rng);
        p.gamma_n = (u(rng) < 0.5 ? -1.0 : 1.0) * g / p.B;
        ASSERT_TRUE(p.in_level_ordering_regime());
        const auto w = sq_transition_frequencies(p);
        EXPECT_LT(rel(w[0] + w[1], 2.0 * std::abs(p.Q)), 1e-12);
        EXPECT_NEAR(w[3] + w[4] - w[2] - w[5], 4.0 * std::abs(p.A_zz), 1e-12 * std::abs(p.Q) * 8.0);
    }
}

TEST(AccumulatedPhase, RamseyExample) {
    const SpinSystemParams p;
    const Segment seg[] = {{1e-3, 0}};
    EXPECT_LT(rel(accumulated_phase(seg, sq_minus, p), -(p.Q - p.nuclear_zeeman()) * 1e-3), 1e-14);
}

TEST(AccumulatedPhase, UnbalancedEchoClosedForm) {
    const SpinSystemParams p;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double t = 10e-3 * u(rng) + 1e-6;
        const double tau = t * u(rng);
        const Segment segs[] = {{t - tau, 0}, {tau, 1}};
        const double closed = -t * p.Q + tau * p.A_zz + p.nuclear_zeeman() * t;
        EXPECT_LT(rel(accumulated_phase(segs, sq_minus, p), closed), 1e-12);
        EXPECT_LT(rel(phase_weights(segs, sq_minus, p).static_phase, closed), 1e-12);
    }
}

TEST(AccumulatedPhase, CancellationAtSlopeRatio) {
    const SpinSystemParams p;
    const double aQ = two_pi * 39.0, aA = two_pi * 204.0;
    for (double t : {0.1e-3, 1e-3, 10e-3}) {
        const double tau = t * aQ / aA;
        const Segment segs[] = {{t - tau, 0}, {tau, 1}};
        const auto w = phase_weights(segs, sq_minus, p);
        for (double dT : {-7.0, 0.3, 12.0}) {
            const double dphi = w.fluctuation({aQ * dT, aA * dT, 0.0, 0.0});
            EXPECT_LE(std::abs(dphi), 1e-12 * t * aQ * std::abs(dT));
            const auto resp = [&](const EnvironmentOffset&) { return InteractionShift{aQ * dT, aA * dT, 0.0, 0.0}; };
            const double full = accumulated_phase(segs, sq_minus, p, resp) - accumulated_phase(segs, sq_minus, p);
            EXPECT_LE(std::abs(full), 1e-12 * std::abs(accumulated_phase(segs, sq_minus, p)));
        }
    }
}

TEST(AccumulatedPhase, DoubleQuantumQuadrupoleImmunity) {
    const SpinSystemParams p;
    const Segment segs[] = {{1.3e-3, 0}, {0.4e-3, 0, {}, true}};
    const double base = accumulated_phase(segs, dq_pair, p);
    for (double f : {0.99, 1.01}) {
        SpinSystemParams q = p;
        q.Q *= f;
        EXPECT_LE(std::abs(accumulated_phase(segs, dq_pair, q) - base), 1e-12 * std::abs(base));
        const auto shifted = [&](const EnvironmentOffset&) { return InteractionShift{p.Q * (f - 1.0), 0.0, 0.0, 0.0}; };
        EXPECT_LE(std::abs(accumulated_phase(segs, dq_pair, p, shifted) - base), 1e-12 * std::abs(base));
    }
    EXPECT_EQ(phase_weights(segs, dq_pair, p).quadrupole, 0.0);
}

TEST(AccumulatedPhase, Additivity) {
    const SpinSystemParams p;
    const std::vector<Segment> a{{0.3e-3, 0}, {0.2e-3, 1}};
    const std::vector<Segment> b{{0.7e-3, -1, {}, true}, {0.1e-3, 1, {}, true}};
    std::vector<Segment> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    for (const auto& pair : {sq_minus, sq_plus, dq_pair}) {
        const double whole = accumulated_phase(ab, pair, p);
        const double parts = accumulated_phase(a, pair, p) + accumulated_phase(b, pair, p);
        EXPECT_LE(std::abs(whole - parts), 1e-12 * std::abs(whole));
    }
}

TEST(AccumulatedPhase, RejectsNegativeDuration) {
    const Segment segs[] = {{-1e-3, 0}};
    EXPECT_THROW(accumulated_phase(segs, sq_minus, SpinSystemParams{}), DomainError);
}
