#pragma once

#include <cstdint>
#include <vector>

#include "migrasim/time.hpp"

namespace migrasim {

// One source-tuple emission, fully determined ahead of the run.
struct Emission {
    SimTime t = 0;
    std::int64_t key = 0;
    std::uint32_t payload_bytes = 0;
};

struct KeySpec {
    enum class Kind { Constant, Cycle, Uniform } kind = Kind::Constant;
    std::int64_t a = 0; // Constant: the key. Cycle: modulus. Uniform: low.
    std::int64_t b = 0; // Uniform: high (inclusive).
};

struct PayloadSpec {
    enum class Kind { Constant, Uniform } kind = Kind::Constant;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
};

// A run of uniformly spaced emissions: tuple i fires at
// start + floor(i * 1e9 / rate) nanoseconds — exact spacing, no drift.
// jitter_ns > 0 adds a deterministic pseudo-random offset in [0, jitter_ns].
struct WorkloadPhase {
    double start_s = 0;
    double rate_per_s = 0;
    std::uint64_t count = 0;
    KeySpec key;
    PayloadSpec payload;
    std::int64_t jitter_ns = 0;
};

struct SourceSpec {
    std::int32_t stream = -1;
    std::vector<WorkloadPhase> phases;
    std::vector<Emission> extra; // explicit emissions merged in
};

// Expands a source spec into its emission schedule, sorted by time (stable
// across platforms for a given seed). Throws on invalid phases.
std::vector<Emission> generate_emissions(const SourceSpec& spec, std::uint64_t seed);

} // namespace migrasim
