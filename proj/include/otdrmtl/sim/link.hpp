#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/errors.hpp"

namespace otdrmtl::sim {

enum class EventKind { Reflective, NonReflective, Merged };

inline std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::Reflective: return "reflective";
        case EventKind::NonReflective: return "nonreflective";
        case EventKind::Merged: return "merged";
    }
    return "?";
}

inline EventKind event_kind_from_string(const std::string& s) {
    if (s == "reflective") return EventKind::Reflective;
    if (s == "nonreflective") return EventKind::NonReflective;
    if (s == "merged") return EventKind::Merged;
    throw data_error("unknown event kind: " + s);
}

// Cause classes: 0 none, 1 connector misalignment, 2 perpendicular cut,
// 3 fiber bend, 4 tilted cut, 5 merged reflective pair, 6 merged
// reflective + non-reflective.
inline const char* cause_name(int cause_class) {
    switch (cause_class) {
        case 0: return "no fault";
        case 1: return "connector misalignment";
        case 2: return "perpendicular cut";
        case 3: return "fiber bend";
        case 4: return "tilted cut";
        case 5: return "merged reflective pair";
        case 6: return "merged reflective+bend";
        default: return "?";
    }
}

// One fault along the link. Merged events carry their two sub-events; the
// top-level loss/reflectance are the labels (total loss, combined peak
// reflectance).
struct FaultEvent {
    double position_m = 0.0;
    EventKind kind = EventKind::NonReflective;
    std::optional<double> loss_db;
    std::optional<double> reflectance_db;
    int cause_class = 3;

    // merged sub-structure (unused for single events)
    double sub_separation_m = 0.0;
    double sub1_loss_db = 0.0;
    std::optional<double> sub1_reflectance_db;
    double sub2_loss_db = 0.0;
    std::optional<double> sub2_reflectance_db;

    void validate(double pulse_width_m) const {
        if (!(position_m > 0.0)) throw config_error("FaultEvent: position must be > 0");
        switch (kind) {
            case EventKind::NonReflective:
                if (reflectance_db) throw config_error("FaultEvent: non-reflective event cannot have reflectance");
                if (!loss_db || !(*loss_db > 0.0))
                    throw config_error("FaultEvent: non-reflective event needs loss > 0");
                if (cause_class != 3 && cause_class != 4)
                    throw config_error("FaultEvent: non-reflective cause must be 3 or 4");
                break;
            case EventKind::Reflective:
                if (!reflectance_db) throw config_error("FaultEvent: reflective event needs reflectance");
                if (*reflectance_db < -50.0 || *reflectance_db > -15.0)
                    throw config_error("FaultEvent: reflectance must be in [-50, -15] dB");
                if (loss_db && *loss_db < 0.0) throw config_error("FaultEvent: loss must be >= 0");
                if (cause_class != 1 && cause_class != 2)
                    throw config_error("FaultEvent: reflective cause must be 1 or 2");
                break;
            case EventKind::Merged:
                if (!(sub_separation_m > 0.0) || sub_separation_m > pulse_width_m)
                    throw config_error("FaultEvent: merged sub-event separation must be in (0, pulse width]");
                if (!sub1_reflectance_db)
                    throw config_error("FaultEvent: merged event needs a reflective first sub-event");
                if (cause_class == 5) {
                    if (!sub2_reflectance_db)
                        throw config_error("FaultEvent: cause 5 needs two reflective sub-events");
                } else if (cause_class == 6) {
                    if (sub2_reflectance_db)
                        throw config_error("FaultEvent: cause 6 pairs reflective with non-reflective");
                    if (!(sub2_loss_db > 0.0))
                        throw config_error("FaultEvent: cause 6 needs non-reflective sub-event loss > 0");
                } else {
                    throw config_error("FaultEvent: merged cause must be 5 or 6");
                }
                break;
        }
        if (cause_class < 0 || cause_class > 6) throw config_error("FaultEvent: cause class out of range");
    }
};

inline double combine_reflectance_db(double r1_db, std::optional<double> r2_db) {
    double p = std::pow(10.0, r1_db / 10.0);
    if (r2_db) p += std::pow(10.0, *r2_db / 10.0);
    return 10.0 * std::log10(p);
}

// Builds a merged event; top-level labels are derived from the sub-events.
inline FaultEvent make_merged_event(double position_m, double separation_m, int cause_class, double sub1_loss_db,
                                    double sub1_reflectance_db, double sub2_loss_db,
                                    std::optional<double> sub2_reflectance_db) {
    FaultEvent e;
    e.position_m = position_m;
    e.kind = EventKind::Merged;
    e.cause_class = cause_class;
    e.sub_separation_m = separation_m;
    e.sub1_loss_db = sub1_loss_db;
    e.sub1_reflectance_db = sub1_reflectance_db;
    e.sub2_loss_db = sub2_loss_db;
    e.sub2_reflectance_db = sub2_reflectance_db;
    e.loss_db = sub1_loss_db + sub2_loss_db;
    e.reflectance_db = combine_reflectance_db(sub1_reflectance_db, sub2_reflectance_db);
    return e;
}

enum class Termination { APC, PC, Reflector };

inline std::string to_string(Termination t) {
    switch (t) {
        case Termination::APC: return "apc";
        case Termination::PC: return "pc";
        case Termination::Reflector: return "reflector";
    }
    return "?";
}

inline Termination termination_from_string(const std::string& s) {
    if (s == "apc") return Termination::APC;
    if (s == "pc") return Termination::PC;
    if (s == "reflector") return Termination::Reflector;
    throw data_error("unknown termination: " + s);
}

struct EndTermination {
    Termination kind = Termination::APC;
    std::optional<double> reflectance_db;  // required for PC / Reflector

    void validate() const {
        if (kind == Termination::APC) {
            if (reflectance_db) throw config_error("EndTermination: APC end has no reflectance");
        } else {
            if (!reflectance_db) throw config_error("EndTermination: reflective end needs reflectance");
            if (*reflectance_db < -50.0 || *reflectance_db > -14.0)
                throw config_error("EndTermination: reflectance must be in [-50, -14] dB");
        }
    }

    int cause_class() const {
        switch (kind) {
            case Termination::APC: return 4;        // abrupt non-reflective end
            case Termination::PC: return 2;         // sharp peak + abrupt end
            case Termination::Reflector: return 1;  // reflector peak
        }
        return 0;
    }
};

struct FiberLink {
    double total_length_m = 0.0;
    std::vector<FaultEvent> events;
    EndTermination end_termination;

    void validate(double pulse_width_m) const {
        if (!(total_length_m > 0.0)) throw config_error("FiberLink: total length must be > 0");
        end_termination.validate();
        double prev = 0.0;
        const FaultEvent* prev_event = nullptr;
        for (const auto& e : events) {
            e.validate(pulse_width_m);
            if (!(e.position_m > 0.0 && e.position_m < total_length_m))
                throw config_error("FiberLink: event position outside (0, total_length)");
            if (!(e.position_m > prev)) throw config_error("FiberLink: events must be strictly ordered");
            if (prev_event && e.position_m - prev_event->position_m < 2.0 * pulse_width_m)
                throw config_error("FiberLink: events closer than 2 pulse widths must be one merged event");
            prev = e.position_m;
            prev_event = &e;
        }
    }
};

// What the extraction stage labels: link events plus (optionally) the end
// termination treated as one more event. End events carry no loss label;
// the trace simply ends there.
struct LabeledEvent {
    double position_m = 0.0;
    EventKind kind = EventKind::NonReflective;
    std::optional<double> loss_db;
    std::optional<double> reflectance_db;
    int cause_class = 0;
    bool is_end = false;
};

inline std::vector<LabeledEvent> labeled_events(const FiberLink& link, bool include_end) {
    std::vector<LabeledEvent> out;
    out.reserve(link.events.size() + 1);
    for (const auto& e : link.events)
        out.push_back({e.position_m, e.kind, e.loss_db, e.reflectance_db, e.cause_class, false});
    if (include_end) {
        LabeledEvent end;
        end.position_m = link.total_length_m;
        end.kind = link.end_termination.kind == Termination::APC ? EventKind::NonReflective : EventKind::Reflective;
        end.reflectance_db = link.end_termination.reflectance_db;
        end.cause_class = link.end_termination.cause_class();
        end.is_end = true;
        out.push_back(end);
    }
    return out;
}

inline void to_json(nlohmann::json& j, const FaultEvent& e) {
    j = nlohmann::json{{"position_m", e.position_m}, {"kind", to_string(e.kind)}, {"cause_class", e.cause_class}};
    if (e.loss_db) j["loss_db"] = *e.loss_db;
    if (e.reflectance_db) j["reflectance_db"] = *e.reflectance_db;
    if (e.kind == EventKind::Merged) {
        j["sub_separation_m"] = e.sub_separation_m;
        j["sub1_loss_db"] = e.sub1_loss_db;
        if (e.sub1_reflectance_db) j["sub1_reflectance_db"] = *e.sub1_reflectance_db;
        j["sub2_loss_db"] = e.sub2_loss_db;
        if (e.sub2_reflectance_db) j["sub2_reflectance_db"] = *e.sub2_reflectance_db;
    }
}

inline void from_json(const nlohmann::json& j, FaultEvent& e) {
    e = FaultEvent{};
    e.position_m = j.at("position_m").get<double>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    e.cause_class = j.at("cause_class").get<int>();
    if (j.contains("loss_db")) e.loss_db = j.at("loss_db").get<double>();
    if (j.contains("reflectance_db")) e.reflectance_db = j.at("reflectance_db").get<double>();
    if (e.kind == EventKind::Merged) {
        e.sub_separation_m = j.at("sub_separation_m").get<double>();
        e.sub1_loss_db = j.at("sub1_loss_db").get<double>();
        if (j.contains("sub1_reflectance_db")) e.sub1_reflectance_db = j.at("sub1_reflectance_db").get<double>();
        e.sub2_loss_db = j.at("sub2_loss_db").get<double>();
        if (j.contains("sub2_reflectance_db")) e.sub2_reflectance_db = j.at("sub2_reflectance_db").get<double>();
    }
}

inline void to_json(nlohmann::json& j, const FiberLink& link) {
    j = nlohmann::json{{"total_length_m", link.total_length_m},
                       {"events", link.events},
                       {"end_termination", to_string(link.end_termination.kind)}};
    if (link.end_termination.reflectance_db) j["end_reflectance_db"] = *link.end_termination.reflectance_db;
}

inline void from_json(const nlohmann::json& j, FiberLink& link) {
    link = FiberLink{};
    link.total_length_m = j.at("total_length_m").get<double>();
    link.events = j.at("events").get<std::vector<FaultEvent>>();
    link.end_termination.kind = termination_from_string(j.at("end_termination").get<std::string>());
    if (j.contains("end_reflectance_db")) link.end_termination.reflectance_db = j.at("end_reflectance_db").get<double>();
}

}  // namespace otdrmtl::sim
