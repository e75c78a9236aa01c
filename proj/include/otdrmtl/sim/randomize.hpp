#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/rng.hpp"
#include "otdrmtl/sim/config.hpp"
#include "otdrmtl/sim/link.hpp"

namespace otdrmtl::sim {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    double draw(Rng& rng) const { return rng.uniform(lo, hi); }
};

inline void to_json(nlohmann::json& j, const Range& r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json& j, Range& r) {
    r.lo = j.at(0).get<double>();
    r.hi = j.at(1).get<double>();
}

// Per-cause parameter ranges. The ranges keep causes that share a kind
// separated in loss/reflectance so the labels stay learnable.
struct CauseParams {
    Range loss_db{0.1, 1.0};
    Range reflectance_db{-45.0, -20.0};
};

inline void to_json(nlohmann::json& j, const CauseParams& p) {
    j = nlohmann::json{{"loss_db", p.loss_db}, {"reflectance_db", p.reflectance_db}};
}
inline void from_json(const nlohmann::json& j, CauseParams& p) {
    if (j.contains("loss_db")) j.at("loss_db").get_to(p.loss_db);
    if (j.contains("reflectance_db")) j.at("reflectance_db").get_to(p.reflectance_db);
}

struct LinkRandomizationSpec {
    Range length_m{1200.0, 2600.0};
    int min_events = 1;
    int max_events = 3;
    // weights over {reflective, non-reflective, merged}
    std::array<double, 3> kind_weights{1.0, 1.0, 1.0};
    // index = cause class 1..6 (0 unused)
    std::array<CauseParams, 7> cause_params = default_cause_params();
    Range merged_separation_frac{0.1, 1.0};  // fraction of one pulse width
    double min_event_separation_m = 80.0;
    double end_margin_m = 80.0;
    Termination end_termination = Termination::APC;
    Range end_reflectance_db{-40.0, -20.0};

    static std::array<CauseParams, 7> default_cause_params() {
        std::array<CauseParams, 7> p{};
        p[1] = {{0.1, 0.4}, {-50.0, -32.0}};   // connector misalignment: faint peak
        p[2] = {{1.5, 5.0}, {-30.0, -15.0}};   // perpendicular cut: sharp peak, big drop
        p[3] = {{0.2, 1.2}, {0.0, 0.0}};       // fiber bend: small step
        p[4] = {{2.0, 6.0}, {0.0, 0.0}};       // tilted cut: abrupt step
        p[5] = {{0.1, 0.5}, {-45.0, -20.0}};   // per sub-event of a reflective pair
        p[6] = {{0.1, 0.5}, {-45.0, -20.0}};   // reflective sub-event; bend loss drawn separately
        return p;
    }

    Range merged_bend_loss_db{0.5, 3.0};  // non-reflective sub-event of cause 6

    void validate() const {
        if (!(length_m.lo > 0.0) || length_m.hi < length_m.lo)
            throw config_error("LinkRandomizationSpec: bad length range");
        if (min_events < 0 || max_events < min_events)
            throw config_error("LinkRandomizationSpec: bad event count range");
        double wsum = 0.0;
        for (double w : kind_weights) {
            if (w < 0.0) throw config_error("LinkRandomizationSpec: negative kind weight");
            wsum += w;
        }
        if (max_events > 0 && wsum <= 0.0) throw config_error("LinkRandomizationSpec: all kind weights zero");
        for (int c = 1; c <= 6; ++c) {
            const auto& p = cause_params[static_cast<std::size_t>(c)];
            if (p.loss_db.hi < p.loss_db.lo || p.loss_db.lo < 0.1 || p.loss_db.hi > 10.0)
                throw config_error("LinkRandomizationSpec: loss range must lie within [0.1, 10] dB");
            if (c == 1 || c == 2 || c == 5 || c == 6) {
                if (p.reflectance_db.hi < p.reflectance_db.lo || p.reflectance_db.lo < -50.0 ||
                    p.reflectance_db.hi > -15.0)
                    throw config_error("LinkRandomizationSpec: reflectance range must lie within [-50, -15] dB");
            }
        }
        if (merged_separation_frac.lo <= 0.0 || merged_separation_frac.hi > 1.0 ||
            merged_separation_frac.hi < merged_separation_frac.lo)
            throw config_error("LinkRandomizationSpec: merged separation fraction must lie within (0, 1]");
        if (min_event_separation_m <= 0.0 || end_margin_m <= 0.0)
            throw config_error("LinkRandomizationSpec: separations must be > 0");
    }
};

inline void to_json(nlohmann::json& j, const LinkRandomizationSpec& s) {
    j = nlohmann::json{{"length_m", s.length_m},
                       {"min_events", s.min_events},
                       {"max_events", s.max_events},
                       {"kind_weights", s.kind_weights},
                       {"merged_separation_frac", s.merged_separation_frac},
                       {"min_event_separation_m", s.min_event_separation_m},
                       {"end_margin_m", s.end_margin_m},
                       {"end_termination", to_string(s.end_termination)},
                       {"end_reflectance_db", s.end_reflectance_db},
                       {"merged_bend_loss_db", s.merged_bend_loss_db}};
    for (int c = 1; c <= 6; ++c) j["cause_params"][std::to_string(c)] = s.cause_params[static_cast<std::size_t>(c)];
}

inline void from_json(const nlohmann::json& j, LinkRandomizationSpec& s) {
    s = LinkRandomizationSpec{};
    if (j.contains("length_m")) j.at("length_m").get_to(s.length_m);
    if (j.contains("min_events")) j.at("min_events").get_to(s.min_events);
    if (j.contains("max_events")) j.at("max_events").get_to(s.max_events);
    if (j.contains("kind_weights")) j.at("kind_weights").get_to(s.kind_weights);
    if (j.contains("merged_separation_frac")) j.at("merged_separation_frac").get_to(s.merged_separation_frac);
    if (j.contains("min_event_separation_m")) j.at("min_event_separation_m").get_to(s.min_event_separation_m);
    if (j.contains("end_margin_m")) j.at("end_margin_m").get_to(s.end_margin_m);
    if (j.contains("end_termination")) s.end_termination = termination_from_string(j.at("end_termination").get<std::string>());
    if (j.contains("end_reflectance_db")) j.at("end_reflectance_db").get_to(s.end_reflectance_db);
    if (j.contains("merged_bend_loss_db")) j.at("merged_bend_loss_db").get_to(s.merged_bend_loss_db);
    if (j.contains("cause_params"))
        for (int c = 1; c <= 6; ++c) {
            auto key = std::to_string(c);
            if (j.at("cause_params").contains(key))
                j.at("cause_params").at(key).get_to(s.cause_params[static_cast<std::size_t>(c)]);
        }
    s.validate();
}

namespace detail {

inline FaultEvent draw_event(const LinkRandomizationSpec& spec, int cause, double position_m, double pulse_width_m,
                             Rng& rng) {
    const auto& params = spec.cause_params[static_cast<std::size_t>(cause)];
    FaultEvent e;
    switch (cause) {
        case 1:
        case 2:
            e.position_m = position_m;
            e.kind = EventKind::Reflective;
            e.cause_class = cause;
            e.reflectance_db = params.reflectance_db.draw(rng);
            e.loss_db = params.loss_db.draw(rng);
            break;
        case 3:
        case 4:
            e.position_m = position_m;
            e.kind = EventKind::NonReflective;
            e.cause_class = cause;
            e.loss_db = params.loss_db.draw(rng);
            break;
        case 5: {
            const double sep = spec.merged_separation_frac.draw(rng) * pulse_width_m;
            e = make_merged_event(position_m, sep, 5, params.loss_db.draw(rng), params.reflectance_db.draw(rng),
                                  params.loss_db.draw(rng), params.reflectance_db.draw(rng));
            break;
        }
        case 6: {
            const double sep = spec.merged_separation_frac.draw(rng) * pulse_width_m;
            e = make_merged_event(position_m, sep, 6, params.loss_db.draw(rng), params.reflectance_db.draw(rng),
                                  spec.merged_bend_loss_db.draw(rng), std::nullopt);
            break;
        }
        default:
            throw config_error("draw_event: cause class must be 1..6");
    }
    return e;
}

inline int draw_cause_for_kind(EventKind kind, Rng& rng) {
    switch (kind) {
        case EventKind::Reflective: return rng.uniform_int(2) == 0 ? 1 : 2;
        case EventKind::NonReflective: return rng.uniform_int(2) == 0 ? 3 : 4;
        case EventKind::Merged: return rng.uniform_int(2) == 0 ? 5 : 6;
    }
    return 3;
}

}  // namespace detail

// Link with events of the requested cause classes at uniformly drawn,
// mutually separated positions. Deterministic per (spec, causes, seed).
inline FiberLink make_link_with_causes(const LinkRandomizationSpec& spec, const std::vector<int>& causes,
                                       const OtdrConfig& config, std::uint64_t seed) {
    spec.validate();
    config.validate();
    const double pulse_m = config.pulse_width_m();
    Rng rng(mix_seed(seed, 0x6c696e6bull));

    FiberLink link;
    link.total_length_m = spec.length_m.draw(rng);
    link.end_termination.kind = spec.end_termination;
    if (spec.end_termination != Termination::APC) link.end_termination.reflectance_db = spec.end_reflectance_db.draw(rng);

    const auto count = causes.size();
    if (count > 0) {
        const double min_sep = std::max(spec.min_event_separation_m, 2.0 * pulse_m);
        const double usable = link.total_length_m - 2.0 * spec.end_margin_m;
        if (usable < static_cast<double>(count - 1) * min_sep)
            throw config_error("make_link_with_causes: too many events for the link length");
        std::vector<double> positions(count);
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            for (auto& p : positions)
                p = rng.uniform(spec.end_margin_m, link.total_length_m - spec.end_margin_m);
            std::sort(positions.begin(), positions.end());
            placed = true;
            for (std::size_t i = 1; i < count; ++i)
                if (positions[i] - positions[i - 1] < min_sep) {
                    placed = false;
                    break;
                }
        }
        if (!placed) throw config_error("make_link_with_causes: could not place events with required separation");
        for (std::size_t i = 0; i < count; ++i)
            link.events.push_back(detail::draw_event(spec, causes[i], positions[i], pulse_m, rng));
    }
    link.validate(pulse_m);
    return link;
}

// Fully random link: event count, kinds and causes drawn from the spec
// mixture. Deterministic per seed.
inline FiberLink random_link(const LinkRandomizationSpec& spec, const OtdrConfig& config, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, 0x72616e64ull));
    const int count =
        spec.min_events + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.max_events - spec.min_events + 1)));
    const double total_w = spec.kind_weights[0] + spec.kind_weights[1] + spec.kind_weights[2];
    std::vector<int> causes;
    causes.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double u = rng.uniform() * total_w;
        EventKind kind = u < spec.kind_weights[0]
                             ? EventKind::Reflective
                             : (u < spec.kind_weights[0] + spec.kind_weights[1] ? EventKind::NonReflective
                                                                                : EventKind::Merged);
        causes.push_back(detail::draw_cause_for_kind(kind, rng));
    }
    return make_link_with_causes(spec, causes, config, mix_seed(seed, 0x706f73ull));
}

}  // namespace otdrmtl::sim
