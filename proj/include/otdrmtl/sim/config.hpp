#pragma once

#include <nlohmann/json.hpp>

#include "otdrmtl/errors.hpp"

namespace otdrmtl::sim {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s, vacuum

// Backscatter level relative to launch power at the reference pulse width.
inline constexpr double kBackscatterDb = -52.0;

// Linear-power floor relative to launch power applied before dB conversion.
inline constexpr double kFloorRelative = 1e-12;

// Acquisition settings. Defaults follow the 50 ns / 1650 nm / 8 ns
// configuration the synthetic setups emulate.
struct OtdrConfig {
    double pulse_width_ns = 50.0;
    double wavelength_nm = 1650.0;
    double sample_interval_ns = 8.0;
    double group_index = 1.468;
    double attenuation_db_per_km = 0.22;
    double launch_power_dbm = 13.0;
    int shots_to_average = 128;

    void validate() const {
        if (!(pulse_width_ns > 0.0)) throw config_error("OtdrConfig: pulse_width_ns must be > 0");
        if (!(sample_interval_ns > 0.0)) throw config_error("OtdrConfig: sample_interval_ns must be > 0");
        if (!(group_index >= 1.4 && group_index <= 1.6))
            throw config_error("OtdrConfig: group_index must be in [1.4, 1.6]");
        if (!(attenuation_db_per_km > 0.0)) throw config_error("OtdrConfig: attenuation must be > 0");
        if (!(launch_power_dbm >= 7.0 && launch_power_dbm <= 17.0))
            throw config_error("OtdrConfig: launch_power_dbm must be in [7, 17]");
        if (shots_to_average < 1 || shots_to_average > 64000)
            throw config_error("OtdrConfig: shots_to_average must be in [1, 64000]");
    }

    // Distance between consecutive samples: c * dt / (2 n).
    double sample_spacing_m() const { return kSpeedOfLight * sample_interval_ns * 1e-9 / (2.0 * group_index); }

    // Spatial extent of one pulse on the trace.
    double pulse_width_m() const { return kSpeedOfLight * pulse_width_ns * 1e-9 / (2.0 * group_index); }

    double launch_power_mw() const { return std::pow(10.0, launch_power_dbm / 10.0); }

    double backscatter_level_mw() const { return launch_power_mw() * std::pow(10.0, kBackscatterDb / 10.0); }

    double floor_mw() const { return launch_power_mw() * kFloorRelative; }
};

inline double sample_spacing(const OtdrConfig& config) {
    config.validate();
    return config.sample_spacing_m();
}

inline void to_json(nlohmann::json& j, const OtdrConfig& c) {
    j = nlohmann::json{{"pulse_width_ns", c.pulse_width_ns},
                       {"wavelength_nm", c.wavelength_nm},
                       {"sample_interval_ns", c.sample_interval_ns},
                       {"group_index", c.group_index},
                       {"attenuation_db_per_km", c.attenuation_db_per_km},
                       {"launch_power_dbm", c.launch_power_dbm},
                       {"shots_to_average", c.shots_to_average}};
}

inline void from_json(const nlohmann::json& j, OtdrConfig& c) {
    c = OtdrConfig{};
    if (j.contains("pulse_width_ns")) j.at("pulse_width_ns").get_to(c.pulse_width_ns);
    if (j.contains("wavelength_nm")) j.at("wavelength_nm").get_to(c.wavelength_nm);
    if (j.contains("sample_interval_ns")) j.at("sample_interval_ns").get_to(c.sample_interval_ns);
    if (j.contains("group_index")) j.at("group_index").get_to(c.group_index);
    if (j.contains("attenuation_db_per_km")) j.at("attenuation_db_per_km").get_to(c.attenuation_db_per_km);
    if (j.contains("launch_power_dbm")) j.at("launch_power_dbm").get_to(c.launch_power_dbm);
    if (j.contains("shots_to_average")) j.at("shots_to_average").get_to(c.shots_to_average);
    c.validate();
}

}  // namespace otdrmtl::sim
