#include "migrasim/statemgmt.hpp"

#include <algorithm>
#include <string>

#include "migrasim/rng.hpp"

namespace migrasim {

std::vector<StateBlob> partition_state(const StateBlob& blob, std::uint64_t max_chunk_bytes) {
    if (max_chunk_bytes <= kBlobHeaderBytes) {
        throw std::runtime_error("max_chunk_bytes must exceed the blob header size");
    }
    if (blob.records.empty()) return {blob};

    // Group records by key, keep each group's internal order, and order the
    // groups by key hash so chunk assignment is stable but key-uniform.
    std::map<std::uint64_t, std::vector<StateRecord>> groups;
    for (const StateRecord& r : blob.records) {
        groups[splitmix64(static_cast<std::uint64_t>(r.key))].push_back(r);
    }

    std::vector<StateBlob> chunks;
    StateBlob current = blob;
    current.records.clear();
    std::uint64_t current_bytes = kBlobHeaderBytes;
    auto flush = [&] {
        if (!current.records.empty()) {
            chunks.push_back(current);
            current.records.clear();
            current_bytes = kBlobHeaderBytes;
        }
    };
    for (auto& [hash, group] : groups) {
        (void)hash;
        std::uint64_t group_bytes = 0;
        for (const StateRecord& r : group) group_bytes += record_bytes(r);
        if (current_bytes + group_bytes > max_chunk_bytes && !current.records.empty()) flush();
        // An oversized single key becomes its own chunk rather than being split.
        for (StateRecord& r : group) current.records.push_back(std::move(r));
        current_bytes += group_bytes;
        if (current_bytes >= max_chunk_bytes) flush();
    }
    flush();

    for (std::size_t i = 0; i < chunks.size(); ++i) {
        chunks[i].chunk_index = static_cast<std::int32_t>(i);
        chunks[i].chunk_count = static_cast<std::int32_t>(chunks.size());
    }
    return chunks;
}

StateBlob assemble_chunks(std::vector<StateBlob> chunks) {
    if (chunks.empty()) throw StateChainError("cannot assemble zero chunks");
    std::sort(chunks.begin(), chunks.end(),
              [](const StateBlob& a, const StateBlob& b) { return a.chunk_index < b.chunk_index; });
    const std::int32_t expect = chunks.front().chunk_count;
    if (static_cast<std::int32_t>(chunks.size()) != expect) {
        throw StateChainError("chunk set incomplete: have " + std::to_string(chunks.size()) +
                              " of " + std::to_string(expect));
    }
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (chunks[i].chunk_index != static_cast<std::int32_t>(i) || chunks[i].chunk_count != expect ||
            chunks[i].version != chunks.front().version || chunks[i].query != chunks.front().query) {
            throw StateChainError("chunk set inconsistent");
        }
    }
    StateBlob out = chunks.front();
    out.chunk_index = 0;
    out.chunk_count = 1;
    for (std::size_t i = 1; i < chunks.size(); ++i) {
        for (StateRecord& r : chunks[i].records) out.records.push_back(std::move(r));
    }
    return out;
}

void apply_blob(StateBlob& base, const StateBlob& delta) {
    // Accumulators upsert by (window start, key); entries append.
    for (const StateRecord& r : delta.records) {
        if (r.kind == RecordKind::Accumulator) {
            bool replaced = false;
            for (StateRecord& existing : base.records) {
                if (existing.kind == RecordKind::Accumulator && existing.ts == r.ts && existing.key == r.key) {
                    existing = r;
                    replaced = true;
                    break;
                }
            }
            if (!replaced) base.records.push_back(r);
        } else {
            base.records.push_back(r);
        }
    }
    for (const auto& [stream, seq] : delta.covered_seq) {
        auto it = base.covered_seq.find(stream);
        if (it == base.covered_seq.end() || it->second < seq) base.covered_seq[stream] = seq;
    }
    base.watermark = std::max(base.watermark, delta.watermark);
    base.version = std::max(base.version, delta.version);
}

void Checkpoint::add(StateBlob blob) {
    if (chain_.empty()) {
        if (blob.kind == BlobKind::Incremental) {
            throw StateChainError("increment without a base (increment version " +
                                  std::to_string(blob.version) + ")");
        }
        chain_.push_back(std::move(blob));
        return;
    }
    if (blob.kind != BlobKind::Incremental) {
        throw StateChainError("chain already has a base; expected an increment");
    }
    if (blob.base_version != version()) {
        throw StateChainError("increment base_version " + std::to_string(blob.base_version) +
                              " does not match chain version " + std::to_string(version()));
    }
    if (blob.version <= version()) {
        throw StateChainError("increment version must advance the chain");
    }
    chain_.push_back(std::move(blob));
}

std::uint64_t Checkpoint::version() const {
    if (chain_.empty()) throw StateChainError("empty checkpoint has no version");
    return chain_.back().version;
}

std::uint64_t Checkpoint::total_bytes() const {
    std::uint64_t total = 0;
    for (const StateBlob& b : chain_) total += b.bytes();
    return total;
}

StateBlob Checkpoint::reconstruct() const {
    if (chain_.empty()) throw StateChainError("cannot reconstruct an empty checkpoint");
    StateBlob out = chain_.front();
    out.kind = BlobKind::Full;
    for (std::size_t i = 1; i < chain_.size(); ++i) apply_blob(out, chain_[i]);
    return out;
}

} // namespace migrasim
