#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "evkit/codec.hpp"
#include "evkit/event.hpp"
#include "evkit/rng.hpp"

using namespace evkit;

namespace {

const SensorGeometry kGeom{16, 12};

EventStream random_stream(SplitMix64& rng, std::size_t count, const SensorGeometry& geom,
                          std::int64_t t_max) {
    EventStream s;
    s.geom = geom;
    for (std::size_t i = 0; i < count; ++i) {
        Event e;
        e.t = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(t_max)));
        e.x = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(geom.width)));
        e.y = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(geom.height)));
        e.p = rng.next_below(2) == 0 ? std::int8_t{1} : std::int8_t{-1};
        s.events.push_back(e);
    }
    sort_events_stable(s.events);
    return s;
}

}  // namespace

TEST_CASE("csv parsing basics") {
    const EventStream s = parse_csv("0,1,2,1\n5,3,4,-1", kGeom);
    REQUIRE(s.events.size() == 2);
    CHECK(s.events[0] == Event{0, 1, 2, 1});
    CHECK(s.events[1] == Event{5, 3, 4, -1});

    CHECK(parse_csv("", kGeom).events.empty());
    CHECK(parse_csv("t,x,y,p\n", kGeom).events.empty());  // header only

    const EventStream crlf = parse_csv("t,x,y,p\r\n7,0,0,+1\r\n", kGeom);
    REQUIRE(crlf.events.size() == 1);
    CHECK(crlf.events[0].t == 7);
}

TEST_CASE("csv parse errors carry context") {
    CHECK_THROWS_AS(parse_csv("0,1,2\n", kGeom), ParseError);
    CHECK_THROWS_WITH(parse_csv("0,1,2,1\nhello\n", kGeom),
                      Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THROWS_AS(parse_csv("0,1,2,3\n", kGeom), DomainError);       // polarity
    CHECK_THROWS_AS(parse_csv("0,16,2,1\n", kGeom), BoundsError);      // x == width
    CHECK_THROWS_AS(parse_csv("0,1,12,1\n", kGeom), BoundsError);      // y == height
    CHECK_THROWS_AS(parse_csv("-5,1,2,1\n", kGeom), DomainError);      // negative timestamp
    CHECK_THROWS_AS(parse_csv("0,1,2,1,9\n", kGeom), ParseError);      // extra field
}

TEST_CASE("csv parsing sorts and preserves order among equal timestamps") {
    SplitMix64 rng(21);
    // 10k lines with shuffled timestamps; equal timestamps common
    std::string text;
    std::vector<std::tuple<std::int64_t, std::size_t>> order_oracle;  // (t, original line)
    std::vector<Event> raw;
    for (std::size_t i = 0; i < 10000; ++i) {
        Event e;
        e.t = static_cast<std::int64_t>(rng.next_below(500));  // dense ties
        e.x = static_cast<std::int32_t>(rng.next_below(16));
        e.y = static_cast<std::int32_t>(rng.next_below(12));
        e.p = rng.next_below(2) == 0 ? std::int8_t{1} : std::int8_t{-1};
        raw.push_back(e);
        text += std::to_string(e.t) + "," + std::to_string(e.x) + "," + std::to_string(e.y) +
                "," + std::to_string(static_cast<int>(e.p)) + "\n";
    }
    const EventStream parsed = parse_csv(text, kGeom);
    REQUIRE(parsed.events.size() == raw.size());

    // sortedness
    for (std::size_t i = 1; i < parsed.events.size(); ++i) {
        CHECK(parsed.events[i - 1].t <= parsed.events[i].t);
    }

    // multiset equality against an independent line-split oracle
    auto key = [](const Event& e) { return std::tuple(e.t, e.x, e.y, e.p); };
    std::map<std::tuple<std::int64_t, std::int32_t, std::int32_t, std::int8_t>, int> counts;
    for (const Event& e : raw) ++counts[key(e)];
    for (const Event& e : parsed.events) --counts[key(e)];
    for (const auto& [k, v] : counts) CHECK(v == 0);

    // stability: equal-t events appear in original file order
    std::vector<Event> expected = raw;
    std::stable_sort(expected.begin(), expected.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    CHECK(parsed.events == expected);
}

TEST_CASE("binary codec round-trips") {
    CHECK(parse_binary("", kGeom).events.empty());

    EventStream one;
    one.geom = kGeom;
    one.events.push_back(Event{7, 1, 2, -1});
    const std::string bytes = write_binary(one);
    REQUIRE(bytes.size() == kBinaryRecordSize);
    CHECK(parse_binary(bytes, kGeom) == one);

    SplitMix64 rng(22);
    const EventStream s = random_stream(rng, 1000, kGeom, 100000);
    CHECK(parse_binary(write_binary(s), kGeom) == s);
}

TEST_CASE("binary codec rejects malformed input") {
    CHECK_THROWS_AS(parse_binary(std::string(12, '\0'), kGeom), ParseError);  // truncated
    std::string rec(13, '\0');
    rec[12] = 3;  // invalid polarity byte
    CHECK_THROWS_AS(parse_binary(rec, kGeom), DomainError);
}

TEST_CASE("csv round-trip preserves streams") {
    SplitMix64 rng(23);
    const EventStream s = random_stream(rng, 500, kGeom, 300);
    CHECK(parse_csv(write_csv(s), kGeom) == s);
}

TEST_CASE("validate reports violations as data") {
    SplitMix64 rng(24);
    EventStream ok = random_stream(rng, 100, kGeom, 1000);
    CHECK(validate(ok, kGeom).empty());

    EventStream bad = ok;
    bad.events[5].x = static_cast<std::int32_t>(kGeom.width);  // x == width
    const auto violations = validate(bad, kGeom);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].index == 5);
    CHECK(violations[0].kind == ViolationKind::OutOfBounds);
}

TEST_CASE("validate matches the full-scan oracle on corrupted streams") {
    SplitMix64 rng(25);
    EventStream s = random_stream(rng, 500, kGeom, 1000);
    // corrupt a random subset in assorted ways
    for (int i = 0; i < 40; ++i) {
        Event& e = s.events[rng.next_below(s.events.size())];
        switch (rng.next_below(4)) {
            case 0: e.x = static_cast<std::int32_t>(kGeom.width + rng.next_below(5)); break;
            case 1: e.y = -1; break;
            case 2: e.p = 0; break;
            default: e.t = -static_cast<std::int64_t>(1 + rng.next_below(10)); break;
        }
    }

    // independent full scan
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
        const Event& e = s.events[i];
        const bool bounds = e.x < 0 || e.x >= kGeom.width || e.y < 0 || e.y >= kGeom.height;
        const bool polarity = e.p != 1 && e.p != -1;
        const bool negative = e.t < 0;
        const bool order = i > 0 && e.t < s.events[i - 1].t;
        for (int c = 0; c < bounds + polarity + negative + order; ++c) expected.push_back(i);
    }

    const auto violations = validate(s, kGeom);
    REQUIRE(violations.size() == expected.size());
    for (std::size_t i = 0; i < violations.size(); ++i) CHECK(violations[i].index == expected[i]);
}
