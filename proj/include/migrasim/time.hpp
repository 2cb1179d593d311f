#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace migrasim {

// Simulation time in integer nanoseconds since run start. All arithmetic that
// feeds back into event ordering happens in integers so that runs are
// bit-reproducible across platforms.
using SimTime = std::int64_t;

inline constexpr SimTime kNsPerSec = 1'000'000'000;
inline constexpr SimTime kSimTimeMax = std::numeric_limits<SimTime>::max();

inline constexpr SimTime ns_from_seconds_int(std::int64_t s) { return s * kNsPerSec; }

// Converts a non-negative duration in seconds to nanoseconds, rounding to the
// nearest integer. Throws on NaN/negative/overflow.
inline SimTime ns_from_seconds(double s) {
    if (!(s >= 0.0)) throw std::runtime_error("time must be a non-negative number of seconds");
    double ns = s * static_cast<double>(kNsPerSec);
    if (ns >= 9.0e18) throw std::runtime_error("time out of range: " + std::to_string(s) + " s");
    return static_cast<SimTime>(std::llround(ns));
}

inline double seconds(SimTime t) { return static_cast<double>(t) / static_cast<double>(kNsPerSec); }

// Wire-transmission time of `bytes` over a `bandwidth_bps` link, in ns
// (floor). 128-bit intermediate: bytes*8*1e9 overflows 64 bits already for
// multi-gigabyte blobs.
inline SimTime transmission_ns(std::uint64_t bytes, std::int64_t bandwidth_bps) {
    if (bandwidth_bps <= 0) throw std::runtime_error("bandwidth must be positive");
    unsigned __int128 bits = static_cast<unsigned __int128>(bytes) * 8u * static_cast<unsigned __int128>(kNsPerSec);
    return static_cast<SimTime>(bits / static_cast<unsigned __int128>(bandwidth_bps));
}

} // namespace migrasim
