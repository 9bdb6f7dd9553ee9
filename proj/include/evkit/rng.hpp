#pragma once

#include <cstdint>

namespace evkit {

// SplitMix64. The exact update and finalizer are documented in the README;
// fixture generators in other languages must reproduce this stream bit for bit.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Uniform integer in [0, bound). Modulo bias is irrelevant for fixture use.
    std::uint64_t next_below(std::uint64_t bound) { return bound == 0 ? 0 : next_u64() % bound; }

private:
    std::uint64_t state_;
};

}  // namespace evkit
