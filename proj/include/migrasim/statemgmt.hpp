#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "migrasim/time.hpp"

namespace migrasim {

// Serialized operator state. Two record species share one struct:
//  - Entry: an immutable stored tuple (join build side). Loading appends.
//  - Accumulator: a windowed-aggregate group snapshot. Loading upserts by
//    (ts = window start, key); `aux` carries the count.
enum class RecordKind : std::uint8_t { Entry, Accumulator };

struct StateRecord {
    RecordKind kind = RecordKind::Entry;
    std::int32_t stream = -1; // Entry: source stream; Accumulator: -1
    std::int64_t key = 0;
    std::uint64_t seq = 0; // Entry: source tuple seq; Accumulator: window index
    SimTime ts = 0;        // Entry: event time; Accumulator: window start
    std::uint32_t payload_bytes = 0;
    std::uint64_t aux = 0; // Accumulator: count

    bool operator==(const StateRecord&) const = default;
};

inline constexpr std::uint64_t kRecordOverheadBytes = 32;
inline constexpr std::uint64_t kBlobHeaderBytes = 64;

inline std::uint64_t record_bytes(const StateRecord& r) {
    return static_cast<std::uint64_t>(r.payload_bytes) + kRecordOverheadBytes;
}

enum class BlobKind : std::uint8_t {
    Full,        // complete state
    Immutable,   // snapshot of the state's stable part (base of a chain)
    Incremental, // delta on top of base_version
};

// One unit of state transfer. `covered_seq` names, per input stream, the
// highest source sequence number whose effect is contained in this blob (plus
// its chain ancestors); a host that loads the blob drops re-deliveries at or
// below that mark.
struct StateBlob {
    BlobKind kind = BlobKind::Full;
    std::int32_t query = -1;
    std::uint64_t version = 0;      // extraction mark
    std::uint64_t base_version = 0; // Incremental: required predecessor version
    std::int32_t chunk_index = 0;
    std::int32_t chunk_count = 1;
    SimTime watermark = 0;
    std::map<std::int32_t, std::uint64_t> covered_seq;
    std::vector<StateRecord> records;

    std::uint64_t bytes() const {
        std::uint64_t total = kBlobHeaderBytes;
        for (const StateRecord& r : records) total += record_bytes(r);
        return total;
    }
};

class StateChainError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Splits a blob into chunks of at most `max_chunk_bytes` payload-plus-header
// bytes each, grouping records by key so that one key's records never span
// chunks (a single oversized key still becomes its own chunk). Keys are
// distributed by hash. Chunks may be loaded in any order; each carries the
// full covered_seq map and chain metadata of the original.
std::vector<StateBlob> partition_state(const StateBlob& blob, std::uint64_t max_chunk_bytes);

// Reassembles chunks (any order, validated complete) into one blob with
// records concatenated in chunk order.
StateBlob assemble_chunks(std::vector<StateBlob> chunks);

// A checkpoint chain: one base blob plus increments in version order.
class Checkpoint {
  public:
    // Validates chaining: first blob must be Full or Immutable; each later
    // blob must be Incremental with base_version == the chain's current
    // version. Throws StateChainError otherwise.
    void add(StateBlob blob);

    bool empty() const { return chain_.empty(); }
    std::uint64_t version() const;
    const std::vector<StateBlob>& chain() const { return chain_; }
    std::uint64_t total_bytes() const;

    // Flattens the chain into one Full blob: entries append in order,
    // accumulators upsert (an increment carries the full current value of
    // each touched group), covered marks and watermark take the maximum.
    StateBlob reconstruct() const;

  private:
    std::vector<StateBlob> chain_;
};

// Flattening used by both Checkpoint::reconstruct and chunk-load paths:
// applies `delta` on top of `base` in place.
void apply_blob(StateBlob& base, const StateBlob& delta);

} // namespace migrasim
