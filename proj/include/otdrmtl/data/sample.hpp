#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/sim/link.hpp"

namespace otdrmtl::data {

inline constexpr int kWindowLength = 50;

enum class WindowKind { NoEvent, Reflective, NonReflective, Merged };

inline std::string to_string(WindowKind k) {
    switch (k) {
        case WindowKind::NoEvent: return "none";
        case WindowKind::Reflective: return "reflective";
        case WindowKind::NonReflective: return "nonreflective";
        case WindowKind::Merged: return "merged";
    }
    return "?";
}

inline WindowKind window_kind_from_string(const std::string& s) {
    if (s == "none") return WindowKind::NoEvent;
    if (s == "reflective") return WindowKind::Reflective;
    if (s == "nonreflective") return WindowKind::NonReflective;
    if (s == "merged") return WindowKind::Merged;
    throw data_error("unknown window kind: " + s);
}

inline WindowKind window_kind(sim::EventKind k) {
    switch (k) {
        case sim::EventKind::Reflective: return WindowKind::Reflective;
        case sim::EventKind::NonReflective: return WindowKind::NonReflective;
        case sim::EventKind::Merged: return WindowKind::Merged;
    }
    return WindowKind::NoEvent;
}

// A normalized 50-sample window with the four task targets. Absent targets
// stay absent; they are never encoded as zero.
struct SequenceSample {
    std::array<double, kWindowLength> values{};
    bool has_event = false;
    WindowKind event_kind = WindowKind::NoEvent;
    std::optional<int> position_index;
    std::optional<double> loss_db;
    std::optional<double> reflectance_db;
    int cause_class = 0;
    double snr_db = 0.0;
    std::uint64_t trace_id = 0;
    std::size_t window_start = 0;

    void validate() const {
        for (double v : values)
            if (!(v >= 0.0 && v <= 1.0)) throw data_error("SequenceSample: values must lie in [0, 1]");
        const bool no_event = !has_event;
        if (no_event != (event_kind == WindowKind::NoEvent) || no_event != (cause_class == 0) ||
            (no_event && (position_index || loss_db || reflectance_db)))
            throw data_error("SequenceSample: no-event label chain violated");
        if (has_event) {
            if (!position_index || *position_index < 0 || *position_index >= kWindowLength)
                throw data_error("SequenceSample: event window needs position_index in [0, 49]");
            if (event_kind == WindowKind::NonReflective && reflectance_db)
                throw data_error("SequenceSample: non-reflective window cannot carry reflectance");
            if (loss_db && *loss_db < 0.0) throw data_error("SequenceSample: loss must be >= 0");
        }
        if (cause_class < 0 || cause_class > 6) throw data_error("SequenceSample: cause class out of range");
    }
};

}  // namespace otdrmtl::data
