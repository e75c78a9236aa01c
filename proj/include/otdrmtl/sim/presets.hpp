#pragma once

#include <string>

#include "otdrmtl/data/extract.hpp"
#include "otdrmtl/errors.hpp"
#include "otdrmtl/sim/link.hpp"

namespace otdrmtl::sim {

struct Preset {
    FiberLink link;
    data::ExtractionPolicy policy;
};

// setup1: ~6 km link with two merged events, a mid-span non-reflective
// fault and a PC end connector; five windows per trace (one of them the
// end event, one event-free).
inline Preset preset_setup1() {
    Preset p;
    p.link.total_length_m = 6012.0;
    p.link.end_termination = {Termination::PC, -25.0};
    p.link.events.push_back(make_merged_event(995.0, 2.6, 5, 0.3, -33.0, 0.3, -36.0));
    p.link.events.push_back(make_merged_event(3003.0, 3.4, 6, 0.25, -34.0, 1.0, std::nullopt));
    FaultEvent bend;
    bend.position_m = 4014.0;
    bend.kind = EventKind::NonReflective;
    bend.loss_db = 1.0;
    bend.cause_class = 3;
    p.link.events.push_back(bend);
    p.policy.windows_per_event = 1;
    p.policy.no_event_windows = 1;
    p.policy.include_end_event = true;
    return p;
}

// setup2: 1 km link terminated by a reflector; two windows per trace.
inline Preset preset_setup2() {
    Preset p;
    p.link.total_length_m = 1000.0;
    p.link.end_termination = {Termination::Reflector, -30.0};
    p.policy.windows_per_event = 1;
    p.policy.no_event_windows = 1;
    p.policy.include_end_event = true;
    return p;
}

inline Preset preset_by_name(const std::string& name) {
    if (name == "setup1") return preset_setup1();
    if (name == "setup2") return preset_setup2();
    throw config_error("unknown preset: " + name + " (expected setup1 or setup2)");
}

}  // namespace otdrmtl::sim
