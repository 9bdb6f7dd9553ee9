#pragma once

#include <charconv>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "evkit/errors.hpp"
#include "evkit/event.hpp"

// Bit-exact event codecs.
//
// CSV: UTF-8 lines "t,x,y,p" with integer microsecond timestamps; an optional
// header line "t,x,y,p"; polarity 1, +1 or -1.
//
// Binary: little-endian packed records of 13 bytes each,
//   t: u64 | x: u16 | y: u16 | p: i8.
//
// Both parsers sort the result stably by timestamp (real captures interleave)
// and reject out-of-bounds coordinates and invalid polarities.

namespace evkit {

inline constexpr std::size_t kBinaryRecordSize = 13;

namespace detail {

inline std::int64_t parse_int_field(std::string_view field, std::size_t line_no,
                                    const char* name) {
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": malformed " + name + " field '" +
                         std::string(field) + "'");
    }
    return value;
}

inline void check_event_domain(const Event& e, const SensorGeometry& geom,
                               const std::string& where) {
    if (e.p != 1 && e.p != -1) {
        throw DomainError(where + ": polarity " + std::to_string(e.p) + " not in {-1,+1}");
    }
    if (e.t < 0) {
        throw DomainError(where + ": negative timestamp " + std::to_string(e.t));
    }
    if (e.x < 0 || e.x >= geom.width || e.y < 0 || e.y >= geom.height) {
        throw BoundsError(where + ": coordinate (" + std::to_string(e.x) + "," +
                          std::to_string(e.y) + ") outside " + std::to_string(geom.width) + "x" +
                          std::to_string(geom.height) + " sensor");
    }
}

}  // namespace detail

inline EventStream parse_csv(std::string_view text, const SensorGeometry& geom) {
    geom.validate();
    EventStream stream;
    stream.geom = geom;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line_no == 1 && line == "t,x,y,p") continue;  // optional header

        std::string_view fields[4];
        std::size_t start = 0, n = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                if (n == 4) {
                    throw ParseError("line " + std::to_string(line_no) +
                                     ": expected 4 fields, got more");
                }
                fields[n++] = line.substr(start, i - start);
                start = i + 1;
            }
        }
        if (n != 4) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(n));
        }
        Event e;
        e.t = detail::parse_int_field(fields[0], line_no, "t");
        e.x = static_cast<std::int32_t>(detail::parse_int_field(fields[1], line_no, "x"));
        e.y = static_cast<std::int32_t>(detail::parse_int_field(fields[2], line_no, "y"));
        const std::int64_t p = detail::parse_int_field(fields[3], line_no, "p");
        e.p = static_cast<std::int8_t>(p);
        if (p != 1 && p != -1) {
            throw DomainError("line " + std::to_string(line_no) + ": polarity " +
                              std::to_string(p) + " not in {-1,+1}");
        }
        detail::check_event_domain(e, geom, "line " + std::to_string(line_no));
        stream.events.push_back(e);
    }
    sort_events_stable(stream.events);
    return stream;
}

inline std::string write_csv(const EventStream& stream) {
    std::string out = "t,x,y,p\n";
    for (const Event& e : stream.events) {
        out += std::to_string(e.t);
        out += ',';
        out += std::to_string(e.x);
        out += ',';
        out += std::to_string(e.y);
        out += ',';
        out += std::to_string(static_cast<int>(e.p));
        out += '\n';
    }
    return out;
}

inline EventStream parse_binary(std::string_view bytes, const SensorGeometry& geom) {
    geom.validate();
    if (bytes.size() % kBinaryRecordSize != 0) {
        throw ParseError("binary event data length " + std::to_string(bytes.size()) +
                         " is not a multiple of the " + std::to_string(kBinaryRecordSize) +
                         "-byte record size");
    }
    EventStream stream;
    stream.geom = geom;
    const std::size_t count = bytes.size() / kBinaryRecordSize;
    stream.events.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* rec =
            reinterpret_cast<const unsigned char*>(bytes.data()) + i * kBinaryRecordSize;
        std::uint64_t t = 0;
        for (int b = 7; b >= 0; --b) t = (t << 8) | rec[b];
        Event e;
        if (t > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            throw ParseError("record " + std::to_string(i) + ": timestamp overflows");
        }
        e.t = static_cast<std::int64_t>(t);
        e.x = static_cast<std::int32_t>(rec[8] | (rec[9] << 8));
        e.y = static_cast<std::int32_t>(rec[10] | (rec[11] << 8));
        e.p = static_cast<std::int8_t>(rec[12]);
        if (e.p != 1 && e.p != -1) {
            throw DomainError("record " + std::to_string(i) + ": polarity byte " +
                              std::to_string(static_cast<int>(e.p)) + " not in {-1,+1}");
        }
        detail::check_event_domain(e, geom, "record " + std::to_string(i));
        stream.events.push_back(e);
    }
    sort_events_stable(stream.events);
    return stream;
}

inline std::string write_binary(const EventStream& stream) {
    std::string out;
    out.reserve(stream.events.size() * kBinaryRecordSize);
    for (const Event& e : stream.events) {
        const std::uint64_t t = static_cast<std::uint64_t>(e.t);
        for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((t >> (8 * b)) & 0xff));
        const std::uint16_t x = static_cast<std::uint16_t>(e.x);
        const std::uint16_t y = static_cast<std::uint16_t>(e.y);
        out.push_back(static_cast<char>(x & 0xff));
        out.push_back(static_cast<char>((x >> 8) & 0xff));
        out.push_back(static_cast<char>(y & 0xff));
        out.push_back(static_cast<char>((y >> 8) & 0xff));
        out.push_back(static_cast<char>(e.p));
    }
    return out;
}

}  // namespace evkit
