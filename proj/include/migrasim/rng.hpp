#pragma once

#include <cstdint>

namespace migrasim {

// splitmix64; used for key-range hashing and as the workload RNG core.
// Self-contained so that hash-based chunk assignment is identical on every
// platform (std::hash makes no such promise).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG with explicit algorithms for the few distributions the
// workload generator needs. Not std::mt19937 + std::uniform_int_distribution
// because the distribution implementations vary across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ 0x5deece66d5ULL) {
        // Warm up so that small seeds do not produce correlated first draws.
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix64(state_);
    }

    // Uniform integer in [lo, hi] via rejection-free modulo reduction (the
    // bias at 64-bit range is negligible and, above all, deterministic).
    std::int64_t uniform_i64(std::int64_t lo, std::int64_t hi) {
        if (hi < lo) return lo;
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(next_u64());
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    double uniform_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  private:
    std::uint64_t state_;
};

} // namespace migrasim
