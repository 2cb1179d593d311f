#include "migrasim/workload.hpp"

#include <algorithm>
#include <stdexcept>

#include "migrasim/rng.hpp"

namespace migrasim {

namespace {

std::int64_t pick_key(const KeySpec& k, std::uint64_t index, Rng& rng) {
    switch (k.kind) {
    case KeySpec::Kind::Constant:
        return k.a;
    case KeySpec::Kind::Cycle:
        if (k.a <= 0) {
            throw std::runtime_error("key cycle length must be positive");
        }
        return static_cast<std::int64_t>(index % static_cast<std::uint64_t>(k.a));
    case KeySpec::Kind::Uniform:
        if (k.b < k.a) {
            throw std::runtime_error("key range is inverted");
        }
        return rng.uniform_i64(k.a, k.b);
    }
    throw std::runtime_error("unknown key spec");
}

std::uint32_t pick_payload(const PayloadSpec& p, Rng& rng) {
    switch (p.kind) {
    case PayloadSpec::Kind::Constant:
        return p.a;
    case PayloadSpec::Kind::Uniform:
        if (p.b < p.a) {
            throw std::runtime_error("payload range is inverted");
        }
        return static_cast<std::uint32_t>(
            rng.uniform_i64(static_cast<std::int64_t>(p.a), static_cast<std::int64_t>(p.b)));
    }
    throw std::runtime_error("unknown payload spec");
}

} // namespace

std::vector<Emission> generate_emissions(const SourceSpec& spec, std::uint64_t seed) {
    if (spec.stream < 0) {
        throw std::runtime_error("source spec needs a stream");
    }
    std::vector<Emission> out;
    Rng rng(seed ^ splitmix64(static_cast<std::uint64_t>(spec.stream) + 1));
    for (const auto& ph : spec.phases) {
        if (ph.count == 0) {
            continue;
        }
        if (!(ph.rate_per_s > 0)) {
            throw std::runtime_error("phase rate must be positive");
        }
        if (ph.start_s < 0 || ph.jitter_ns < 0) {
            throw std::runtime_error("phase start and jitter must be non-negative");
        }
        const SimTime start = ns_from_seconds(ph.start_s);
        const double per = 1e9 / ph.rate_per_s;
        out.reserve(out.size() + ph.count);
        for (std::uint64_t i = 0; i < ph.count; ++i) {
            Emission e;
            e.t = start + static_cast<SimTime>(static_cast<double>(i) * per);
            if (ph.jitter_ns > 0) {
                e.t += rng.uniform_i64(0, ph.jitter_ns);
            }
            e.key = pick_key(ph.key, i, rng);
            e.payload_bytes = pick_payload(ph.payload, rng);
            out.push_back(e);
        }
    }
    out.insert(out.end(), spec.extra.begin(), spec.extra.end());
    std::stable_sort(out.begin(), out.end(),
                     [](const Emission& a, const Emission& b) { return a.t < b.t; });
    return out;
}

} // namespace migrasim
