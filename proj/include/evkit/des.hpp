#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evkit/errors.hpp"
#include "evkit/event.hpp"

// Dynamic event subframe splitting: partition the events between two RGB
// exposure timestamps into n equal-duration clusters.
//
// Bins are half-open [b_i, b_{i+1}) with the last bin closed at end_us, so
// every in-window event lands in exactly one cluster. Boundary i sits at
// start + round(i * (end - start) / n), computed in integer arithmetic
// (round half up), so bin widths differ by at most one microsecond.

namespace evkit {

struct SplitConfig {
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;
    std::int64_t n = 3;

    void validate() const {
        if (n < 1) {
            throw ConfigError("cluster count must be >= 1, got " + std::to_string(n));
        }
        if (end_us <= start_us) {
            throw ConfigError("window end " + std::to_string(end_us) +
                              " must be after start " + std::to_string(start_us));
        }
        if (end_us - start_us < n) {
            throw ConfigError("window of " + std::to_string(end_us - start_us) +
                              "us cannot hold " + std::to_string(n) +
                              " clusters of at least 1us each");
        }
    }
};

// n disjoint, time-ordered clusters over the in-window events, plus the n+1
// strictly increasing bin boundaries. Clusters are spans into a single owned
// copy of the in-window substream; events outside the window are dropped and
// counted, never errored.
class EventClusterSet {
public:
    EventClusterSet(std::vector<Event> window_events, std::vector<std::size_t> offsets,
                    std::vector<std::int64_t> boundaries, std::size_t dropped)
        : window_events_(std::move(window_events)),
          offsets_(std::move(offsets)),
          boundaries_(std::move(boundaries)),
          dropped_(dropped) {}

    std::size_t cluster_count() const { return offsets_.size() - 1; }

    std::span<const Event> cluster(std::size_t i) const {
        return std::span<const Event>(window_events_).subspan(offsets_[i],
                                                              offsets_[i + 1] - offsets_[i]);
    }

    std::span<const Event> window_events() const { return window_events_; }
    const std::vector<std::int64_t>& boundaries() const { return boundaries_; }
    std::size_t dropped() const { return dropped_; }

private:
    std::vector<Event> window_events_;
    std::vector<std::size_t> offsets_;  // cluster i is [offsets_[i], offsets_[i+1])
    std::vector<std::int64_t> boundaries_;
    std::size_t dropped_ = 0;
};

namespace detail {

// round(i * span / n), half up, without overflowing for microsecond scales.
inline std::int64_t rounded_boundary_offset(std::int64_t i, std::int64_t span, std::int64_t n) {
    const std::int64_t num = i * span;
    const std::int64_t q = num / n;
    const std::int64_t r = num % n;
    return q + (2 * r >= n ? 1 : 0);
}

}  // namespace detail

inline std::vector<std::int64_t> split_boundaries(const SplitConfig& cfg) {
    cfg.validate();
    std::vector<std::int64_t> boundaries(static_cast<std::size_t>(cfg.n) + 1);
    const std::int64_t span = cfg.end_us - cfg.start_us;
    for (std::int64_t i = 0; i <= cfg.n; ++i) {
        boundaries[static_cast<std::size_t>(i)] =
            cfg.start_us + detail::rounded_boundary_offset(i, span, cfg.n);
    }
    return boundaries;
}

inline EventClusterSet split(const EventStream& stream, const SplitConfig& cfg) {
    const std::vector<std::int64_t> boundaries = split_boundaries(cfg);

    std::vector<Event> window;
    std::size_t dropped = 0;
    for (const Event& e : stream.events) {
        if (e.t < cfg.start_us || e.t > cfg.end_us) {
            ++dropped;
        } else {
            window.push_back(e);
        }
    }

    // Events are sorted, so each cluster is a contiguous run.
    std::vector<std::size_t> offsets(static_cast<std::size_t>(cfg.n) + 1, 0);
    std::size_t pos = 0;
    for (std::int64_t i = 0; i < cfg.n; ++i) {
        offsets[static_cast<std::size_t>(i)] = pos;
        if (i < cfg.n - 1) {
            while (pos < window.size() && window[pos].t < boundaries[static_cast<std::size_t>(i) + 1]) {
                ++pos;
            }
        } else {
            pos = window.size();  // last bin is closed at end_us
        }
    }
    offsets[static_cast<std::size_t>(cfg.n)] = window.size();

    return EventClusterSet(std::move(window), std::move(offsets), boundaries, dropped);
}

// The single-frame baseline: the same window collapsed to one cluster.
inline EventClusterSet split_to_single(const EventStream& stream, const SplitConfig& cfg) {
    SplitConfig single = cfg;
    single.n = 1;
    return split(stream, single);
}

}  // namespace evkit
