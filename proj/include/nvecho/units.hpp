#pragma once

// Unit handling for configuration input.
//
// Internally every frequency is a signed angular frequency in rad/s. Text input
// carries ordinary frequencies (Hz with SI prefixes) and is multiplied by 2*pi
// when converted; Quantity keeps the value in the canonical display unit so that
// printing and re-parsing a configuration is exact.

#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <system_error>

#include "error.hpp"

namespace nvecho {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Ordinary frequency (Hz) to angular frequency (rad/s).
constexpr double hz(double f) noexcept { return two_pi * f; }
constexpr double khz(double f) noexcept { return two_pi * 1e3 * f; }
constexpr double mhz(double f) noexcept { return two_pi * 1e6 * f; }
constexpr double ghz(double f) noexcept { return two_pi * 1e9 * f; }

/// Angular frequency (rad/s) back to Hz.
constexpr double to_hz(double omega) noexcept { return omega / two_pi; }

enum class Dimension {
    dimensionless,
    frequency,          // Hz
    time,               // s
    temperature,        // K
    field,              // G
    pressure,           // GPa
    frequency_per_kelvin,
    frequency_per_gauss,
    frequency_per_gpa,
};

constexpr std::string_view canonical_unit(Dimension d) noexcept {
    switch (d) {
    case Dimension::dimensionless: return "";
    case Dimension::frequency: return "Hz";
    case Dimension::time: return "s";
    case Dimension::temperature: return "K";
    case Dimension::field: return "G";
    case Dimension::pressure: return "GPa";
    case Dimension::frequency_per_kelvin: return "Hz/K";
    case Dimension::frequency_per_gauss: return "Hz/G";
    case Dimension::frequency_per_gpa: return "Hz/GPa";
    }
    return "";
}

constexpr std::string_view dimension_name(Dimension d) noexcept {
    switch (d) {
    case Dimension::dimensionless: return "dimensionless";
    case Dimension::frequency: return "frequency";
    case Dimension::time: return "time";
    case Dimension::temperature: return "temperature";
    case Dimension::field: return "magnetic field";
    case Dimension::pressure: return "pressure";
    case Dimension::frequency_per_kelvin: return "frequency per kelvin";
    case Dimension::frequency_per_gauss: return "frequency per gauss";
    case Dimension::frequency_per_gpa: return "frequency per GPa";
    }
    return "";
}

/// A value in the canonical display unit of its dimension.
struct Quantity {
    double value = 0.0;
    Dimension dimension = Dimension::dimensionless;

    /// Value in internal units: rad/s for anything frequency-like, otherwise the
    /// canonical unit itself.
    double internal() const noexcept {
        switch (dimension) {
        case Dimension::frequency:
        case Dimension::frequency_per_kelvin:
        case Dimension::frequency_per_gauss:
        case Dimension::frequency_per_gpa:
            return two_pi * value;
        default:
            return value;
        }
    }

    static Quantity from_internal(double v, Dimension d) noexcept {
        Quantity q{1.0, d};
        q.value = q.internal() == 1.0 ? v : v / two_pi;
        return q;
    }

    bool operator==(const Quantity&) const = default;
};

namespace detail {

struct UnitEntry {
    std::string_view symbol;
    Dimension dimension;
    double scale;
};

inline constexpr std::array unit_table{
    UnitEntry{"Hz", Dimension::frequency, 1.0},
    UnitEntry{"kHz", Dimension::frequency, 1e3},
    UnitEntry{"MHz", Dimension::frequency, 1e6},
    UnitEntry{"GHz", Dimension::frequency, 1e9},
    UnitEntry{"s", Dimension::time, 1.0},
    UnitEntry{"ms", Dimension::time, 1e-3},
    UnitEntry{"us", Dimension::time, 1e-6},
    UnitEntry{"\xC2\xB5s", Dimension::time, 1e-6}, // micro sign
    UnitEntry{"\xCE\xBCs", Dimension::time, 1e-6}, // greek mu
    UnitEntry{"ns", Dimension::time, 1e-9},
    UnitEntry{"K", Dimension::temperature, 1.0},
    UnitEntry{"mK", Dimension::temperature, 1e-3},
    UnitEntry{"G", Dimension::field, 1.0},
    UnitEntry{"mG", Dimension::field, 1e-3},
    UnitEntry{"GPa", Dimension::pressure, 1.0},
    UnitEntry{"MPa", Dimension::pressure, 1e-3},
    UnitEntry{"Hz/K", Dimension::frequency_per_kelvin, 1.0},
    UnitEntry{"kHz/K", Dimension::frequency_per_kelvin, 1e3},
    UnitEntry{"MHz/K", Dimension::frequency_per_kelvin, 1e6},
    UnitEntry{"Hz/G", Dimension::frequency_per_gauss, 1.0},
    UnitEntry{"kHz/G", Dimension::frequency_per_gauss, 1e3},
    UnitEntry{"MHz/G", Dimension::frequency_per_gauss, 1e6},
    UnitEntry{"Hz/GPa", Dimension::frequency_per_gpa, 1.0},
    UnitEntry{"kHz/GPa", Dimension::frequency_per_gpa, 1e3},
    UnitEntry{"MHz/GPa", Dimension::frequency_per_gpa, 1e6},
};

inline std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

} // namespace detail

/// Shortest decimal representation that reads back to the same double.
inline std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw Error("number formatting failed");
    return std::string(buf.data(), end);
}

/// Parses a leading decimal number; returns the number of characters consumed
/// (0 if there is no number).
inline std::size_t parse_number_prefix(std::string_view s, double& out) noexcept {
    const char* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    if (ec != std::errc{}) return 0;
    return static_cast<std::size_t>(ptr - s.data());
}

/// Parses "<number> <unit>" for the expected dimension. Bare numbers are
/// rejected unless the dimension is dimensionless.
inline Quantity parse_quantity(std::string_view text, Dimension expected) {
    const auto s = detail::trim(text);
    double number = 0.0;
    const auto used = parse_number_prefix(s, number);
    if (used == 0) throw DomainError("expected a number in '" + std::string(text) + "'");
    if (!std::isfinite(number)) throw DomainError("non-finite value in '" + std::string(text) + "'");
    const auto unit = detail::trim(s.substr(used));
    if (expected == Dimension::dimensionless) {
        if (!unit.empty()) throw DomainError("unexpected unit '" + std::string(unit) + "' on a dimensionless value");
        return {number, expected};
    }
    if (unit.empty()) {
        throw DomainError("missing unit on '" + std::string(text) + "' (expected " +
                          std::string(dimension_name(expected)) + ", e.g. '" +
                          format_number(number) + " " + std::string(canonical_unit(expected)) + "')");
    }
    for (const auto& e : detail::unit_table) {
        if (e.symbol == unit) {
            if (e.dimension != expected) {
                throw DomainError("unit '" + std::string(unit) + "' is a " +
                                  std::string(dimension_name(e.dimension)) + ", expected " +
                                  std::string(dimension_name(expected)));
            }
            return {number * e.scale, expected};
        }
    }
    throw DomainError("unknown unit '" + std::string(unit) + "'");
}

inline std::string format_quantity(const Quantity& q) {
    const auto unit = canonical_unit(q.dimension);
    if (unit.empty()) return format_number(q.value);
    return format_number(q.value) + " " + std::string(unit);
}

} // namespace nvecho
