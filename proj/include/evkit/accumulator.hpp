#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "evkit/errors.hpp"
#include "evkit/event.hpp"
#include "evkit/tensor.hpp"

// Polarity-sum accumulation and the blue/red/white rendering of event frames.
// Coordinates: x is column, y is row, origin top-left.

namespace evkit {

// Signed per-pixel polarity sums for one cluster. Counts keep magnitude;
// rendering collapses them to sign.
struct EventFrame {
    SensorGeometry geom;
    std::vector<std::int64_t> counts;  // height x width, row-major
    std::int64_t t_begin = 0;          // window [t_begin, t_end)
    std::int64_t t_end = 0;

    std::int64_t count_at(std::int64_t x, std::int64_t y) const {
        return counts[static_cast<std::size_t>(y * geom.width + x)];
    }
    std::int64_t& count_at(std::int64_t x, std::int64_t y) {
        return counts[static_cast<std::size_t>(y * geom.width + x)];
    }
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kBluePixel{0, 0, 255};    // polarity sum > 0
inline constexpr Rgb kRedPixel{255, 0, 0};     // polarity sum < 0
inline constexpr Rgb kWhitePixel{255, 255, 255};  // not triggered

struct RenderedFrame {
    SensorGeometry geom;
    std::vector<Rgb> pixels;  // row-major from top-left
};

inline EventFrame accumulate(std::span<const Event> cluster, const SensorGeometry& geom,
                             std::int64_t t_begin, std::int64_t t_end) {
    geom.validate();
    EventFrame frame;
    frame.geom = geom;
    frame.counts.assign(static_cast<std::size_t>(geom.width * geom.height), 0);
    frame.t_begin = t_begin;
    frame.t_end = t_end;
    for (const Event& e : cluster) {
        if (e.x < 0 || e.x >= geom.width || e.y < 0 || e.y >= geom.height) {
            throw BoundsError("accumulate: event at (" + std::to_string(e.x) + "," +
                              std::to_string(e.y) + ") outside " + std::to_string(geom.width) +
                              "x" + std::to_string(geom.height) + " sensor");
        }
        frame.count_at(e.x, e.y) += e.p;
    }
    return frame;
}

inline EventFrame accumulate(std::span<const Event> cluster, const SensorGeometry& geom) {
    const std::int64_t begin = cluster.empty() ? 0 : cluster.front().t;
    const std::int64_t end = cluster.empty() ? 0 : cluster.back().t + 1;
    return accumulate(cluster, geom, begin, end);
}

inline RenderedFrame render(const EventFrame& frame) {
    RenderedFrame out;
    out.geom = frame.geom;
    out.pixels.reserve(frame.counts.size());
    for (std::int64_t c : frame.counts) {
        out.pixels.push_back(c > 0 ? kBluePixel : (c < 0 ? kRedPixel : kWhitePixel));
    }
    return out;
}

inline Tensor frame_to_tensor(const EventFrame& frame) {
    Tensor t({1, frame.geom.height, frame.geom.width});
    for (std::size_t i = 0; i < frame.counts.size(); ++i) {
        t.flat(i) = static_cast<double>(frame.counts[i]);
    }
    return t;
}

// Binary PPM (P6), bit-exact: "P6\n<W> <H>\n255\n" then RGB byte triples.
inline std::string ppm_bytes(const RenderedFrame& frame) {
    std::string out = "P6\n" + std::to_string(frame.geom.width) + " " +
                      std::to_string(frame.geom.height) + "\n255\n";
    out.reserve(out.size() + frame.pixels.size() * 3);
    for (const Rgb& px : frame.pixels) {
        out.push_back(static_cast<char>(px.r));
        out.push_back(static_cast<char>(px.g));
        out.push_back(static_cast<char>(px.b));
    }
    return out;
}

inline void write_ppm(const RenderedFrame& frame, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    const std::string bytes = ppm_bytes(frame);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw IoError("failed writing " + path.string());
    }
}

}  // namespace evkit
