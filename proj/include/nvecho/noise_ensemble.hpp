#pragma once

// Distributions of environmental deviations, their characteristic functions, and
// the Monte-Carlo ensemble average used when no closed form exists.
//
// Lorentzian sigma is the half-width at half-maximum; Gaussian sigma is the
// standard deviation.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "parallel.hpp"

namespace nvecho {

enum class DistributionKind { lorentzian, gaussian, delta };

inline std::string to_string(DistributionKind k) {
    switch (k) {
    case DistributionKind::lorentzian: return "lorentzian";
    case DistributionKind::gaussian: return "gaussian";
    case DistributionKind::delta: return "delta";
    }
    return "?";
}

struct Distribution {
    DistributionKind kind = DistributionKind::delta;
    double mu = 0.0;
    double sigma = 0.0;

    static Distribution lorentzian(double mu, double half_width) { return checked({DistributionKind::lorentzian, mu, half_width}); }
    static Distribution gaussian(double mu, double stddev) { return checked({DistributionKind::gaussian, mu, stddev}); }
    static Distribution delta(double mu) { return {DistributionKind::delta, mu, 0.0}; }

    void validate() const {
        if (!std::isfinite(mu) || !std::isfinite(sigma)) throw DomainError("distribution parameters must be finite");
        if (sigma < 0.0) throw DomainError("distribution scale must be non-negative");
        if (kind == DistributionKind::delta && sigma != 0.0) throw DomainError("delta distribution has zero scale");
    }

    double cdf(double x) const noexcept {
        switch (kind) {
        case DistributionKind::lorentzian:
            if (sigma == 0.0) return x < mu ? 0.0 : 1.0;
            return 0.5 + std::atan((x - mu) / sigma) / std::numbers::pi;
        case DistributionKind::gaussian:
            if (sigma == 0.0) return x < mu ? 0.0 : 1.0;
            return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
        case DistributionKind::delta:
            return x < mu ? 0.0 : 1.0;
        }
        return 0.0;
    }

    bool operator==(const Distribution&) const = default;

private:
    static Distribution checked(Distribution d) {
        d.validate();
        return d;
    }
};

enum class NoiseVariable { temperature, strain, field };

inline std::string to_string(NoiseVariable v) {
    switch (v) {
    case NoiseVariable::temperature: return "temperature";
    case NoiseVariable::strain: return "strain";
    case NoiseVariable::field: return "field";
    }
    return "?";
}

/// One independent environmental variable. Values are deviations from the
/// operating point (K, dimensionless strain, or G); the coupling to the spin is
/// provided by the ResponseModel used alongside.
struct NoiseSource {
    NoiseVariable variable = NoiseVariable::temperature;
    Distribution dist;

    bool operator==(const NoiseSource&) const = default;
};

/// Closed interval used to truncate heavy-tailed samples.
struct Interval {
    double lo = -INFINITY;
    double hi = INFINITY;
};

/// E[exp(i u x)].
inline std::complex<double> characteristic_function(const Distribution& d, double u) {
    const std::complex<double> carrier = std::polar(1.0, d.mu * u);
    switch (d.kind) {
    case DistributionKind::lorentzian: return carrier * std::exp(-d.sigma * std::abs(u));
    case DistributionKind::gaussian: return carrier * std::exp(-0.5 * d.sigma * d.sigma * u * u);
    case DistributionKind::delta: return carrier;
    }
    return carrier;
}

/// Product of characteristic functions of independent sources, each evaluated
/// at its phase coefficient (rad per unit of the variable).
inline std::complex<double> dephasing_factor(std::span<const NoiseSource> sources, std::span<const double> coefficients) {
    if (sources.size() != coefficients.size()) throw DomainError("one phase coefficient per source is required");
    std::complex<double> f{1.0, 0.0};
    for (std::size_t j = 0; j < sources.size(); ++j) f *= characteristic_function(sources[j].dist, coefficients[j]);
    return f;
}

namespace detail {

/// Draws from one distribution (optionally truncated) on one substream.
class Sampler {
public:
    Sampler(const Distribution& d, std::optional<Interval> cut, std::uint64_t seed)
        : dist_(d), engine_(seed) {
        if (cut && d.kind == DistributionKind::lorentzian && d.sigma > 0.0) {
            u_lo_ = d.cdf(cut->lo);
            u_hi_ = d.cdf(cut->hi);
        }
        if (cut) cut_ = *cut;
    }

    double operator()() {
        switch (dist_.kind) {
        case DistributionKind::delta:
            return dist_.mu;
        case DistributionKind::lorentzian: {
            const double u = u_lo_ + (u_hi_ - u_lo_) * uniform_open01(engine_);
            const double x = dist_.mu + dist_.sigma * std::tan(std::numbers::pi * (u - 0.5));
            return std::clamp(x, cut_.lo, cut_.hi);
        }
        case DistributionKind::gaussian:
            for (int attempt = 0; attempt < 1000; ++attempt) {
                const double x = dist_.mu + dist_.sigma * normal();
                if (x >= cut_.lo && x <= cut_.hi) return x;
            }
            throw DomainError("truncation interval holds almost no Gaussian mass");
        }
        return dist_.mu;
    }

private:
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open01(engine_);
        const double u2 = uniform_open01(engine_);
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    Distribution dist_;
    std::mt19937_64 engine_;
    Interval cut_{};
    double u_lo_ = 0.0;
    double u_hi_ = 1.0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace detail

/// Probability mass outside the truncation interval.
inline double truncated_mass(const Distribution& d, const Interval& cut) noexcept {
    return d.cdf(cut.lo) + (1.0 - d.cdf(cut.hi));
}

/// n draws, deterministic in (seed, n) and independent of `workers`.
inline std::vector<double> sample(const Distribution& d, std::size_t n, std::uint64_t seed, unsigned workers = 1,
                                  std::optional<Interval> cut = std::nullopt) {
    d.validate();
    if (n == 0) throw DomainError("sample count must be at least 1");
    std::vector<double> out(n);
    const std::size_t chunks = (n + default_chunk_size - 1) / default_chunk_size;
    parallel_for(chunks, workers, [&](std::size_t c) {
        detail::Sampler draw(d, cut, substream_seed(seed, 0, c));
        const std::size_t end = std::min(n, (c + 1) * default_chunk_size);
        for (std::size_t i = c * default_chunk_size; i < end; ++i) out[i] = draw();
    });
    return out;
}

struct McConfig {
    std::size_t samples = 1'000'000;
    std::uint64_t seed = 1;
    unsigned workers = 1;

    bool operator==(const McConfig&) const = default;
};

struct McAverage {
    std::complex<double> mean{1.0, 0.0};
    std::size_t samples = 0;
    /// Per-source probability mass excluded by truncation.
    std::vector<double> truncated_mass;
};

/// Monte-Carlo estimate of E[exp(i phase(x_1, ..., x_m))] over independent
/// sources. Source j uses substream j, so a single-source average sees exactly
/// the values returned by sample(dist, n, seed).
template <class PhaseFn>
McAverage ensemble_average(std::span<const NoiseSource> sources, std::span<const std::optional<Interval>> cuts,
                           const McConfig& cfg, PhaseFn&& phase) {
    if (cfg.samples == 0) throw DomainError("sample count must be at least 1");
    if (cuts.size() != sources.size()) throw DomainError("one truncation entry per source is required");
    for (const auto& s : sources) s.dist.validate();
    const std::size_t m = sources.size();

    McAverage out;
    out.samples = cfg.samples;
    for (std::size_t j = 0; j < m; ++j) out.truncated_mass.push_back(cuts[j] ? truncated_mass(sources[j].dist, *cuts[j]) : 0.0);

    const auto chunk = [&](std::size_t c, std::size_t begin, std::size_t end) {
        std::vector<detail::Sampler> draws;
        draws.reserve(m);
        for (std::size_t j = 0; j < m; ++j) draws.emplace_back(sources[j].dist, cuts[j], substream_seed(cfg.seed, j, c));
        std::array<std::complex<double>, default_chunk_size> terms;
        std::vector<double> x(m);
        const std::size_t len = end - begin;
        for (std::size_t i = 0; i < len; ++i) {
            for (std::size_t j = 0; j < m; ++j) x[j] = draws[j]();
            const double ph = phase(std::span<const double>(x));
            terms[i] = {std::cos(ph), std::sin(ph)};
        }
        return pairwise_sum(std::span<std::complex<double>>(terms.data(), len));
    };
    const auto total = chunked_reduce<std::complex<double>>(cfg.samples, default_chunk_size, cfg.workers, chunk);
    out.mean = total / static_cast<double>(cfg.samples);
    return out;
}

} // namespace nvecho
