#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/io_util.hpp"
#include "otdrmtl/rng.hpp"
#include "otdrmtl/sim/config.hpp"
#include "otdrmtl/sim/link.hpp"

namespace otdrmtl::sim {

inline constexpr double kSnrCapDb = 99.0;
inline constexpr std::size_t kMaxTraceSamples = 10'000'000;

// Sampled backscatter curve in dB (5 log10 of linear power in mW).
struct OtdrTrace {
    std::vector<double> samples_db;
    double sample_spacing_m = 0.0;
    OtdrConfig config;
    FiberLink ground_truth;
    double snr_db = kSnrCapDb;
    std::uint64_t rng_seed = 0;

    std::size_t size() const { return samples_db.size(); }
    double distance_m(std::size_t i) const { return static_cast<double>(i) * sample_spacing_m; }
    double linear_mw(std::size_t i) const { return std::pow(10.0, samples_db[i] / 5.0); }
};

namespace detail {

// Renderable primitive: a loss step (ramped over one pulse width) plus an
// optional reflection pulse starting at the same position.
struct Primitive {
    double position_m;
    double loss_db;
    std::optional<double> reflectance_db;
};

inline std::vector<Primitive> primitives(const FiberLink& link) {
    std::vector<Primitive> prims;
    for (const auto& e : link.events) {
        switch (e.kind) {
            case EventKind::Reflective:
                prims.push_back({e.position_m, e.loss_db.value_or(0.0), e.reflectance_db});
                break;
            case EventKind::NonReflective:
                prims.push_back({e.position_m, *e.loss_db, std::nullopt});
                break;
            case EventKind::Merged:
                prims.push_back({e.position_m, e.sub1_loss_db, e.sub1_reflectance_db});
                prims.push_back({e.position_m + e.sub_separation_m, e.sub2_loss_db, e.sub2_reflectance_db});
                break;
        }
    }
    if (link.end_termination.kind != Termination::APC)
        prims.push_back({link.total_length_m, 0.0, link.end_termination.reflectance_db});
    return prims;
}

inline double ramp01(double x) { return x <= 0.0 ? 0.0 : (x >= 1.0 ? 1.0 : x); }

}  // namespace detail

// Noiseless trace. The acquisition range extends past the fiber end so the
// end termination signature is fully sampled.
inline OtdrTrace ideal_trace(const FiberLink& link, const OtdrConfig& config) {
    config.validate();
    const double pulse_m = config.pulse_width_m();
    link.validate(pulse_m);

    const double spacing = config.sample_spacing_m();
    const double range_m = link.total_length_m + std::max(3.0 * pulse_m, 60.0 * spacing);
    const auto n = static_cast<std::size_t>(std::ceil(range_m / spacing));
    if (n > kMaxTraceSamples) throw resource_error("ideal_trace: link exceeds the sample budget");

    const auto prims = detail::primitives(link);
    const double p_bs0 = config.backscatter_level_mw();
    const double launch = config.launch_power_mw();
    const double floor_mw = config.floor_mw();
    const double alpha = config.attenuation_db_per_km;

    // one-way cumulative attenuation in dB at z (fiber loss + event ramps)
    auto cumulative_db = [&](double z) {
        double a = alpha * z * 1e-3;
        for (const auto& p : prims) a += p.loss_db * detail::ramp01((z - p.position_m) / pulse_m);
        return a;
    };

    // received reflection power of each reflective primitive
    std::vector<std::pair<double, double>> pulses;  // (start_m, power_mw)
    for (const auto& p : prims) {
        if (!p.reflectance_db) continue;
        const double incident_db = cumulative_db(p.position_m);
        pulses.emplace_back(p.position_m,
                            launch * std::pow(10.0, (*p.reflectance_db - 2.0 * incident_db) / 10.0));
    }

    OtdrTrace trace;
    trace.sample_spacing_m = spacing;
    trace.config = config;
    trace.ground_truth = link;
    trace.samples_db.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = static_cast<double>(i) * spacing;
        double power = 0.0;
        if (z < link.total_length_m) power = p_bs0 * std::pow(10.0, -2.0 * cumulative_db(z) / 10.0);
        for (const auto& [start, p_mw] : pulses)
            if (z >= start && z < start + pulse_m) power += p_mw;
        trace.samples_db[i] = 5.0 * std::log10(std::max(power, floor_mw));
    }
    return trace;
}

struct SnrEstimate {
    double snr_db = 0.0;
    bool degenerate_signal = false;
};

namespace detail {

// Event-free sample runs: inside the fiber, clear of every event's ramp and
// pulse extent.
inline std::vector<std::pair<std::size_t, std::size_t>> event_free_runs(const OtdrTrace& trace,
                                                                        std::size_t min_run = 50) {
    const double pulse_m = trace.config.pulse_width_m();
    const double spacing = trace.sample_spacing_m;
    std::vector<std::pair<double, double>> keepout;
    for (const auto& p : primitives(trace.ground_truth))
        keepout.emplace_back(p.position_m - 2.0 * pulse_m, p.position_m + 3.0 * pulse_m);
    std::sort(keepout.begin(), keepout.end());

    std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last)
    const double z_max = trace.ground_truth.total_length_m - pulse_m;
    std::size_t i = 0;
    const std::size_t n = trace.size();
    while (i < n) {
        const double z = static_cast<double>(i) * spacing;
        if (z >= z_max) break;
        bool blocked = false;
        double next_free = z;
        for (const auto& [a, b] : keepout) {
            if (z >= a && z < b) {
                blocked = true;
                next_free = b;
                break;
            }
        }
        if (blocked) {
            i = static_cast<std::size_t>(std::ceil(next_free / spacing));
            continue;
        }
        // extend run until the next keepout or fiber end
        double stop = z_max;
        for (const auto& [a, b] : keepout)
            if (a > z) {
                stop = std::min(stop, a);
                break;
            }
        auto last = std::min(n, static_cast<std::size_t>(std::floor(stop / spacing)));
        if (last > i && last - i >= min_run) runs.emplace_back(i, last);
        i = std::max(last, i + 1);
    }
    return runs;
}

}  // namespace detail

// SNR figure-of-merit: start-of-fiber backscatter level over the noise
// standard deviation, both in the linear power domain, as 10 log10.
inline SnrEstimate measure_snr(const OtdrTrace& trace) {
    if (trace.size() < 100) throw numeric_error("measure_snr: need at least 100 samples");
    const auto runs = detail::event_free_runs(trace);
    if (runs.empty()) throw numeric_error("measure_snr: no event-free region of >= 50 samples");

    const double alpha = trace.config.attenuation_db_per_km;
    const double spacing = trace.sample_spacing_m;

    // signal level: decay-compensated mean over the start of the first run
    const auto& first = runs.front();
    const std::size_t n_sig = std::min<std::size_t>(500, first.second - first.first);
    const double floor_mw = trace.config.floor_mw() * (1.0 + 1e-9);
    double p0 = 0.0;
    std::size_t at_floor = 0;
    for (std::size_t i = first.first; i < first.first + n_sig; ++i) {
        const double z_km = static_cast<double>(i) * spacing * 1e-3;
        const double lin = trace.linear_mw(i);
        p0 += lin * std::pow(10.0, 2.0 * alpha * z_km / 10.0);
        if (lin <= floor_mw) ++at_floor;
    }
    p0 /= static_cast<double>(n_sig);

    // noise level: rms of second differences over all event-free runs
    // (high-pass that also rejects the backscatter decay slope)
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (const auto& [a, b] : runs) {
        for (std::size_t i = a + 1; i + 1 < b; ++i) {
            const double d = trace.linear_mw(i + 1) - 2.0 * trace.linear_mw(i) + trace.linear_mw(i - 1);
            sum_sq += d * d / 6.0;
            ++count;
        }
    }
    if (count < 10) throw numeric_error("measure_snr: too few residual samples");
    const double sigma = std::sqrt(sum_sq / static_cast<double>(count));

    SnrEstimate est;
    // degenerate when the signal mean drowns in estimator noise or the
    // floor clamp dominates the start of fiber (no real backscatter)
    const double sig_floor = 3.0 * sigma / std::sqrt(static_cast<double>(n_sig));
    if (p0 <= sig_floor || at_floor * 10 > n_sig * 3) est.degenerate_signal = true;
    if (sigma <= p0 * 1e-8) {
        est.snr_db = kSnrCapDb;
        return est;
    }
    est.snr_db = std::clamp(10.0 * std::log10(std::max(p0, 1e-300) / sigma), -kSnrCapDb, kSnrCapDb);
    return est;
}

// Additive zero-mean Gaussian receiver noise, applied per shot in the
// linear power domain and averaged over `shots` acquisitions. Shot counts
// above 1024 use the exact distribution of the average instead of a literal
// loop.
inline OtdrTrace add_shot_noise(const OtdrTrace& trace, double per_shot_sigma_mw, int shots, std::uint64_t seed) {
    if (shots < 1) throw config_error("add_shot_noise: shots must be >= 1");
    if (per_shot_sigma_mw < 0.0) throw config_error("add_shot_noise: sigma must be >= 0");
    OtdrTrace out = trace;
    out.rng_seed = seed;
    if (per_shot_sigma_mw == 0.0) return out;
    Rng rng(mix_seed(seed, 0x6f74647201ull));
    const double floor_mw = trace.config.floor_mw();
    const std::size_t n = trace.size();
    if (shots <= 1024) {
        const double scale = per_shot_sigma_mw / static_cast<double>(shots);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int m = 0; m < shots; ++m) acc += rng.gaussian();
            const double p = trace.linear_mw(i) + acc * scale;
            out.samples_db[i] = 5.0 * std::log10(std::max(p, floor_mw));
        }
    } else {
        const double sigma_avg = per_shot_sigma_mw / std::sqrt(static_cast<double>(shots));
        for (std::size_t i = 0; i < n; ++i) {
            const double p = trace.linear_mw(i) + sigma_avg * rng.gaussian();
            out.samples_db[i] = 5.0 * std::log10(std::max(p, floor_mw));
        }
    }
    return out;
}

// Noise injection calibrated against measure_snr: the per-shot sigma is
// scaled in a short fixed-point loop until the achieved SNR lands within
// 0.25 dB of the target, which keeps the round trip inside +/- 0.5 dB even
// where floor clamping skews the raw estimate.
inline OtdrTrace add_noise(const OtdrTrace& trace, double target_snr_db, int shots, std::uint64_t seed) {
    if (shots < 1) throw config_error("add_noise: shots must be >= 1");
    if (target_snr_db >= kSnrCapDb) {
        OtdrTrace out = trace;
        out.snr_db = kSnrCapDb;
        out.rng_seed = seed;
        return out;
    }
    const double p0 = trace.config.backscatter_level_mw();
    double sigma_shot = p0 * std::pow(10.0, -target_snr_db / 10.0) * std::sqrt(static_cast<double>(shots));
    OtdrTrace out;
    for (int iter = 0; iter < 8; ++iter) {
        out = add_shot_noise(trace, sigma_shot, shots, seed);
        const SnrEstimate est = measure_snr(out);
        out.snr_db = est.snr_db;
        if (std::abs(est.snr_db - target_snr_db) <= 0.25) return out;
        sigma_shot *= std::pow(10.0, (est.snr_db - target_snr_db) / 10.0);
    }
    const SnrEstimate est = measure_snr(out);
    if (std::abs(est.snr_db - target_snr_db) > 0.5)
        throw numeric_error("add_noise: SNR calibration failed to converge");
    return out;
}

// CSV export: index,distance_m,level_db. The JSON sidecar carries the
// acquisition config, ground truth, seed and achieved SNR.
inline std::string trace_csv(const OtdrTrace& trace) {
    std::string out = "index,distance_m,level_db\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += fmt_g9(trace.distance_m(i));
        out += ',';
        out += fmt_g9(trace.samples_db[i]);
        out += '\n';
    }
    return out;
}

inline nlohmann::json trace_sidecar(const OtdrTrace& trace) {
    return nlohmann::json{{"config", trace.config},
                          {"ground_truth", trace.ground_truth},
                          {"rng_seed", trace.rng_seed},
                          {"snr_db", trace.snr_db},
                          {"sample_spacing_m", trace.sample_spacing_m},
                          {"sample_count", trace.size()}};
}

}  // namespace otdrmtl::sim
