#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "evkit/errors.hpp"

namespace evkit {

struct SensorGeometry {
    std::int64_t width = 346;
    std::int64_t height = 260;

    void validate() const {
        if (width < 1 || height < 1) {
            throw ConfigError("sensor geometry must be at least 1x1, got " +
                              std::to_string(width) + "x" + std::to_string(height));
        }
    }

    friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

// One polarity spike. Timestamps are integer microseconds; polarity is -1 or
// +1 (0 exists only as the "not triggered" state of rendered pixels, never as
// a stored event). Fields are plain so that validation can report violations
// on deliberately corrupted data.
struct Event {
    std::int64_t t = 0;  // microseconds
    std::int32_t x = 0;  // column
    std::int32_t y = 0;  // row
    std::int8_t p = 1;   // polarity, -1 or +1

    friend bool operator==(const Event&, const Event&) = default;
};

// Time-ordered event sequence over a fixed sensor array. Sorting is stable:
// events with equal timestamps keep their original order.
struct EventStream {
    std::vector<Event> events;
    SensorGeometry geom;

    friend bool operator==(const EventStream&, const EventStream&) = default;
};

inline void sort_events_stable(std::vector<Event>& events) {
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
}

enum class ViolationKind {
    OutOfBounds,
    BadPolarity,
    NegativeTimestamp,
    OutOfOrder,
};

struct Violation {
    std::size_t index = 0;
    ViolationKind kind = ViolationKind::OutOfBounds;
    std::string message;
};

// Reports every invariant violation with the offending index. Violations are
// data, not failures: the stream is left untouched and nothing throws.
inline std::vector<Violation> validate(const EventStream& stream, const SensorGeometry& geom) {
    std::vector<Violation> out;
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
        const Event& e = stream.events[i];
        if (e.x < 0 || e.x >= geom.width || e.y < 0 || e.y >= geom.height) {
            out.push_back({i, ViolationKind::OutOfBounds,
                           "event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                               std::to_string(e.y) + ") outside " + std::to_string(geom.width) +
                               "x" + std::to_string(geom.height)});
        }
        if (e.p != 1 && e.p != -1) {
            out.push_back({i, ViolationKind::BadPolarity,
                           "event " + std::to_string(i) + " polarity " + std::to_string(e.p) +
                               " not in {-1,+1}"});
        }
        if (e.t < 0) {
            out.push_back({i, ViolationKind::NegativeTimestamp,
                           "event " + std::to_string(i) + " timestamp " + std::to_string(e.t) +
                               " is negative"});
        }
        if (i > 0 && e.t < stream.events[i - 1].t) {
            out.push_back({i, ViolationKind::OutOfOrder,
                           "event " + std::to_string(i) + " timestamp " + std::to_string(e.t) +
                               " precedes event " + std::to_string(i - 1)});
        }
    }
    return out;
}

}  // namespace evkit
