#pragma once

// Quasiharmonic response data files and the calibration that produces them.

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "response_model.hpp"
#include "units.hpp"

namespace nvecho {

inline constexpr const char* quasiharmonic_format = "nvecho-quasiharmonic";
inline constexpr int quasiharmonic_format_version = 1;

namespace detail {

inline Quantity json_quantity(const nlohmann::ordered_json& j, const std::string& key, Dimension d,
                              const std::string& where) {
    if (!j.contains(key)) throw DomainError(where + "." + key + ": missing");
    if (!j.at(key).is_string()) throw DomainError(where + "." + key + ": expected a string with unit");
    try {
        return parse_quantity(j.at(key).get<std::string>(), d);
    } catch (const DomainError& e) {
        throw DomainError(where + "." + key + ": " + e.what());
    }
}

inline std::array<double, 3> json_expansion(const nlohmann::ordered_json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw DomainError(where + ": expected three expansion coefficients");
    std::array<double, 3> c{};
    for (std::size_t k = 0; k < 3; ++k) {
        if (!j[k].is_number()) throw DomainError(where + ": coefficients must be numbers");
        c[k] = j[k].get<double>();
    }
    return c;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Data file
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json quasiharmonic_to_json(const QuasiharmonicSet& set, const nlohmann::ordered_json& provenance = {}) {
    nlohmann::ordered_json j;
    j["format"] = quasiharmonic_format;
    j["version"] = quasiharmonic_format_version;
    j["reference_temperature"] = format_quantity({set.reference_T(), Dimension::temperature});
    j["thermal_expansion"] = set.Q.thermal_expansion;
    nlohmann::ordered_json constants;
    const auto one = [](const QuasiharmonicResponse& m) {
        nlohmann::ordered_json c;
        if (m.nu0 != 0.0) c["nu0"] = format_quantity(Quantity::from_internal(m.nu0, Dimension::frequency));
        c["a1"] = format_quantity(Quantity::from_internal(m.a1, Dimension::frequency));
        nlohmann::ordered_json modes = nlohmann::ordered_json::array();
        for (const auto& mode : m.modes) {
            nlohmann::ordered_json e;
            e["einstein_temperature"] = format_quantity({mode.omega * hbar_over_kb, Dimension::temperature});
            e["curvature"] = format_quantity(Quantity::from_internal(mode.curvature, Dimension::frequency));
            modes.push_back(e);
        }
        c["modes"] = modes;
        return c;
    };
    constants["Q"] = one(set.Q);
    constants["A_zz"] = one(set.A_zz);
    constants["D"] = one(set.D);
    j["constants"] = constants;
    if (!provenance.is_null()) j["provenance"] = provenance;
    return j;
}

inline QuasiharmonicSet quasiharmonic_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object() || j.value("format", "") != quasiharmonic_format) {
        throw DomainError("not a quasiharmonic response file (format tag missing)");
    }
    if (j.value("version", 0) != quasiharmonic_format_version) {
        throw DomainError("unsupported quasiharmonic file version " + std::to_string(j.value("version", 0)));
    }
    const double T_ref = detail::json_quantity(j, "reference_temperature", Dimension::temperature, "file").value;
    const auto expansion = detail::json_expansion(j.at("thermal_expansion"), "thermal_expansion");
    if (!j.contains("constants")) throw DomainError("file.constants: missing");
    const auto& cs = j.at("constants");
    const auto one = [&](const char* name) {
        if (!cs.contains(name)) throw DomainError(std::string("constants.") + name + ": missing");
        const auto& c = cs.at(name);
        const std::string where = std::string("constants.") + name;
        QuasiharmonicResponse m;
        m.reference_T = T_ref;
        m.thermal_expansion = expansion;
        if (c.contains("nu0")) m.nu0 = detail::json_quantity(c, "nu0", Dimension::frequency, where).internal();
        m.a1 = detail::json_quantity(c, "a1", Dimension::frequency, where).internal();
        if (c.contains("modes")) {
            for (const auto& e : c.at("modes")) {
                const double theta = detail::json_quantity(e, "einstein_temperature", Dimension::temperature, where).value;
                if (!(theta > 0.0)) throw DomainError(where + ": Einstein temperature must be positive");
                m.modes.push_back({omega_from_temperature(theta),
                                   detail::json_quantity(e, "curvature", Dimension::frequency, where).internal()});
            }
        }
        m.validate();
        return m;
    };
    return {one("Q"), one("A_zz"), one("D")};
}

inline QuasiharmonicSet load_quasiharmonic_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open response data file '" + path + "'");
    try {
        return quasiharmonic_from_json(nlohmann::ordered_json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(path + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Calibration targets
// ---------------------------------------------------------------------------

/// Slopes at the reference temperature plus the temperature dependence of the
/// A_zz/Q slope ratio. Q and D are split between expansion and phonon terms by
/// a fixed share; A_zz is fitted to follow the ratio curve relative to Q.
struct CalibrationTargets {
    double reference_T = 300.0;
    double einstein_temperature = 1000.0;
    std::array<double, 3> thermal_expansion{2.0e-7, 2.6e-9, 5.33e-12};
    double phonon_share = 0.5;
    double slope_Q = hz(39.0);
    double slope_D = -khz(77.7);
    double ratio_A_to_Q = 5.8;
    std::vector<std::pair<double, double>> ratio_curve;
};

inline CalibrationTargets calibration_targets_from_json(const nlohmann::ordered_json& j) {
    CalibrationTargets t;
    if (j.contains("reference_temperature")) t.reference_T = detail::json_quantity(j, "reference_temperature", Dimension::temperature, "targets").value;
    if (j.contains("einstein_temperature")) t.einstein_temperature = detail::json_quantity(j, "einstein_temperature", Dimension::temperature, "targets").value;
    if (j.contains("thermal_expansion")) t.thermal_expansion = detail::json_expansion(j.at("thermal_expansion"), "thermal_expansion");
    if (j.contains("phonon_share")) t.phonon_share = j.at("phonon_share").get<double>();
    if (!j.contains("Q") || !j.contains("D") || !j.contains("A_zz")) throw DomainError("targets need Q, A_zz and D blocks");
    t.slope_Q = detail::json_quantity(j.at("Q"), "slope", Dimension::frequency_per_kelvin, "Q").internal();
    t.slope_D = detail::json_quantity(j.at("D"), "slope", Dimension::frequency_per_kelvin, "D").internal();
    const auto& a = j.at("A_zz");
    if (!a.contains("slope_ratio_to_Q")) throw DomainError("A_zz.slope_ratio_to_Q: missing");
    t.ratio_A_to_Q = a.at("slope_ratio_to_Q").get<double>();
    if (a.contains("ratio_curve")) {
        for (const auto& p : a.at("ratio_curve")) {
            if (!p.is_array() || p.size() != 2) throw DomainError("A_zz.ratio_curve entries are [T_kelvin, ratio]");
            t.ratio_curve.emplace_back(p[0].get<double>(), p[1].get<double>());
        }
    }
    return t;
}

struct QuasiharmonicCalibration {
    QuasiharmonicSet set;
    std::vector<std::pair<double, double>> achieved_ratio; // (T, slope_A / slope_Q)
    double relative_residual = 0.0;
};

inline QuasiharmonicCalibration calibrate_quasiharmonic(const CalibrationTargets& t) {
    CalibrationOptions base;
    base.einstein_temperature = t.einstein_temperature;
    base.thermal_expansion = t.thermal_expansion;
    base.phonon_share = t.phonon_share;
    const double T0 = t.reference_T;
    QuasiharmonicCalibration out;
    out.set.Q = calibrate_einstein_model(t.slope_Q, {{T0, 1.0}}, T0, base).model;
    out.set.D = calibrate_einstein_model(t.slope_D, {{T0, 1.0}}, T0, base).model;
    CalibrationOptions a_opts = base;
    a_opts.reference = out.set.Q;
    auto curve = t.ratio_curve;
    if (curve.empty()) curve.emplace_back(T0, t.ratio_A_to_Q);
    const auto a = calibrate_einstein_model(t.ratio_A_to_Q * t.slope_Q, curve, T0, a_opts);
    out.set.A_zz = a.model;
    out.relative_residual = a.relative_residual;
    for (const auto& [T, r] : curve) {
        out.achieved_ratio.emplace_back(T, quasiharmonic_slope(out.set.A_zz, T) / quasiharmonic_slope(out.set.Q, T));
    }
    return out;
}

} // namespace nvecho
