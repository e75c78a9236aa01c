#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/data/sample.hpp"
#include "otdrmtl/errors.hpp"
#include "otdrmtl/rng.hpp"
#include "otdrmtl/sim/trace.hpp"

namespace otdrmtl::data {

// Per-window min-max to [0, 1]; a constant window maps to all 0.5.
inline std::array<double, kWindowLength> normalize(std::span<const double, kWindowLength> raw) {
    double lo = raw[0], hi = raw[0];
    for (double v : raw) {
        if (!std::isfinite(v)) throw data_error("normalize: window contains non-finite values");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::array<double, kWindowLength> out{};
    if (hi == lo) {
        out.fill(0.5);
        return out;
    }
    for (int i = 0; i < kWindowLength; ++i) out[static_cast<std::size_t>(i)] = (raw[static_cast<std::size_t>(i)] - lo) / (hi - lo);
    return out;
}

// Window scaling to [0, 1]: per-window min-max removes the absolute level
// (the model sees shape only); the global affine map anchors the dB range
// implied by the acquisition config (floor to strongest reflection), which
// preserves amplitudes across windows.
enum class Normalization { MinMax, GlobalDb };

inline std::string to_string(Normalization n) { return n == Normalization::MinMax ? "minmax" : "global"; }
inline Normalization normalization_from_string(const std::string& s) {
    if (s == "minmax") return Normalization::MinMax;
    if (s == "global") return Normalization::GlobalDb;
    throw config_error("unknown normalization: " + s);
}

// dB range covered by the global map for a given acquisition config
inline std::pair<double, double> global_db_range(const sim::OtdrConfig& config) {
    const double lo = 5.0 * std::log10(config.floor_mw());
    const double hi = 5.0 * std::log10(config.launch_power_mw() * std::pow(10.0, -15.0 / 10.0)) + 0.5;
    return {lo, hi};
}

inline std::array<double, kWindowLength> normalize_global(std::span<const double, kWindowLength> raw, double lo,
                                                          double hi) {
    std::array<double, kWindowLength> out{};
    for (int i = 0; i < kWindowLength; ++i) {
        const double v = raw[static_cast<std::size_t>(i)];
        if (!std::isfinite(v)) throw data_error("normalize_global: window contains non-finite values");
        out[static_cast<std::size_t>(i)] = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    }
    return out;
}

struct ExtractionPolicy {
    int windows_per_event = 1;
    int no_event_windows = 1;
    bool include_end_event = false;
    int min_position_index = 2;
    int max_position_index = 47;
    Normalization normalization = Normalization::MinMax;

    void validate() const {
        if (windows_per_event < 0 || no_event_windows < 0)
            throw config_error("ExtractionPolicy: window counts must be >= 0");
        if (min_position_index < 0 || max_position_index >= kWindowLength ||
            min_position_index > max_position_index)
            throw config_error("ExtractionPolicy: placement range must lie within [0, 49]");
    }
};

inline void to_json(nlohmann::json& j, const ExtractionPolicy& p) {
    j = nlohmann::json{{"windows_per_event", p.windows_per_event},
                       {"no_event_windows", p.no_event_windows},
                       {"include_end_event", p.include_end_event},
                       {"min_position_index", p.min_position_index},
                       {"max_position_index", p.max_position_index},
                       {"normalization", to_string(p.normalization)}};
}

inline void from_json(const nlohmann::json& j, ExtractionPolicy& p) {
    p = ExtractionPolicy{};
    if (j.contains("windows_per_event")) j.at("windows_per_event").get_to(p.windows_per_event);
    if (j.contains("no_event_windows")) j.at("no_event_windows").get_to(p.no_event_windows);
    if (j.contains("include_end_event")) j.at("include_end_event").get_to(p.include_end_event);
    if (j.contains("min_position_index")) j.at("min_position_index").get_to(p.min_position_index);
    if (j.contains("max_position_index")) j.at("max_position_index").get_to(p.max_position_index);
    if (j.contains("normalization")) p.normalization = normalization_from_string(j.at("normalization").get<std::string>());
    p.validate();
}

struct ExtractedWindow {
    SequenceSample sample;
    std::array<double, kWindowLength> raw_db{};
};

namespace detail {

// First sample index at or after the event position.
inline long onset_index(double position_m, double spacing_m) {
    return static_cast<long>(std::ceil(position_m / spacing_m - 1e-9));
}

}  // namespace detail

// Window extraction per policy: every labeled event is placed at a random
// index inside [min_position_index, max_position_index]; no-event windows
// avoid every event's pulse extent and the fiber end.
inline std::vector<ExtractedWindow> extract_windows_raw(const sim::OtdrTrace& trace, const ExtractionPolicy& policy,
                                                        std::uint64_t seed, std::uint64_t trace_id = 0) {
    policy.validate();
    const double spacing = trace.sample_spacing_m;
    const double pulse_m = trace.config.pulse_width_m();
    const long n = static_cast<long>(trace.size());
    if (n < kWindowLength) throw data_error("extract_windows: trace shorter than one window");

    Rng rng(mix_seed(seed, 0x77696e64ull));
    const auto events = sim::labeled_events(trace.ground_truth, policy.include_end_event);
    std::vector<ExtractedWindow> out;

    const auto [g_lo, g_hi] = global_db_range(trace.config);
    auto grab = [&, g_lo = g_lo, g_hi = g_hi](long start) {
        ExtractedWindow w;
        for (int i = 0; i < kWindowLength; ++i)
            w.raw_db[static_cast<std::size_t>(i)] = trace.samples_db[static_cast<std::size_t>(start + i)];
        const std::span<const double, kWindowLength> raw(w.raw_db);
        w.sample.values = policy.normalization == Normalization::MinMax ? normalize(raw)
                                                                        : normalize_global(raw, g_lo, g_hi);
        w.sample.snr_db = trace.snr_db;
        w.sample.trace_id = trace_id;
        w.sample.window_start = static_cast<std::size_t>(start);
        return w;
    };

    for (const auto& ev : events) {
        const long onset = detail::onset_index(ev.position_m, spacing);
        const long u_lo = std::max<long>(policy.min_position_index, onset - (n - kWindowLength));
        const long u_hi = std::min<long>(policy.max_position_index, onset);
        if (u_lo > u_hi)
            throw data_error("extract_windows: event at " + std::to_string(ev.position_m) +
                             " m cannot be placed inside a window with the required margin");
        for (int k = 0; k < policy.windows_per_event; ++k) {
            const long u = u_lo + static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(u_hi - u_lo + 1)));
            auto w = grab(onset - u);
            w.sample.has_event = true;
            w.sample.event_kind = window_kind(ev.kind);
            w.sample.position_index = static_cast<int>(u);
            w.sample.loss_db = ev.loss_db;
            w.sample.reflectance_db = ev.reflectance_db;
            w.sample.cause_class = ev.cause_class;
            w.sample.validate();
            out.push_back(std::move(w));
        }
    }

    if (policy.no_event_windows > 0) {
        // allowed start positions: window clear of all event extents
        // (including the end termination drop)
        const auto all_events = sim::labeled_events(trace.ground_truth, true);
        std::vector<std::pair<long, long>> keepout;  // window starts to exclude, [lo, hi)
        for (const auto& ev : all_events) {
            const long lo = static_cast<long>(std::floor((ev.position_m - 2.0 * pulse_m) / spacing)) - kWindowLength;
            const long hi = static_cast<long>(std::ceil((ev.position_m + 3.0 * pulse_m) / spacing)) + 1;
            keepout.emplace_back(lo, hi);
        }
        const long max_start =
            std::min<long>(n - kWindowLength,
                           static_cast<long>(std::floor((trace.ground_truth.total_length_m - pulse_m) / spacing)) -
                               kWindowLength);
        std::sort(keepout.begin(), keepout.end());
        std::vector<std::pair<long, long>> allowed;  // inclusive ranges
        long cursor = 0;
        for (const auto& [lo, hi] : keepout) {
            if (lo > cursor) allowed.emplace_back(cursor, std::min(lo - 1, max_start));
            cursor = std::max(cursor, hi);
        }
        if (cursor <= max_start) allowed.emplace_back(cursor, max_start);
        std::erase_if(allowed, [](const auto& r) { return r.second < r.first; });
        long total = 0;
        for (const auto& [a, b] : allowed) total += b - a + 1;
        if (total <= 0) throw data_error("extract_windows: no event-free window available");

        std::vector<long> taken;
        for (int k = 0; k < policy.no_event_windows; ++k) {
            long start = -1;
            for (int attempt = 0; attempt < 200; ++attempt) {
                long pick = static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(total)));
                for (const auto& [a, b] : allowed) {
                    const long len = b - a + 1;
                    if (pick < len) {
                        start = a + pick;
                        break;
                    }
                    pick -= len;
                }
                const bool overlaps = std::any_of(taken.begin(), taken.end(), [&](long t) {
                    return std::abs(t - start) < kWindowLength;
                });
                if (!overlaps) break;
                start = -1;
            }
            if (start < 0) throw data_error("extract_windows: could not place distinct no-event windows");
            taken.push_back(start);
            auto w = grab(start);
            w.sample.validate();
            out.push_back(std::move(w));
        }
    }
    return out;
}

inline std::vector<SequenceSample> extract_windows(const sim::OtdrTrace& trace, const ExtractionPolicy& policy,
                                                   std::uint64_t seed, std::uint64_t trace_id = 0) {
    std::vector<SequenceSample> samples;
    for (auto& w : extract_windows_raw(trace, policy, seed, trace_id)) samples.push_back(std::move(w.sample));
    return samples;
}

}  // namespace otdrmtl::data
