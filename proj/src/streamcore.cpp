#include "migrasim/streamcore.hpp"

#include <algorithm>
#include <stdexcept>

namespace migrasim {

std::uint64_t join_out_seq(std::uint64_t probe_seq, std::uint64_t build_seq) {
    if (probe_seq >= (1ULL << 32) || build_seq >= (1ULL << 32)) {
        throw std::runtime_error("source sequence number exceeds the 32-bit output-identity budget");
    }
    return (probe_seq << 32) | build_seq;
}

std::uint64_t window_out_seq(std::int64_t window_index, std::int64_t key) {
    if (window_index < 0 || window_index >= (1LL << 31) || key < 0 || key > kMaxKey) {
        throw std::runtime_error("window index or key exceeds the output-identity budget");
    }
    return (static_cast<std::uint64_t>(window_index) << 32) | static_cast<std::uint64_t>(key);
}

Operator::Operator(const QueryDef& def) : def_(def) {
    switch (def_.kind) {
    case OpKind::Filter:
    case OpKind::Aggregate:
        if (def_.input_streams.size() != 1) throw std::runtime_error("operator needs exactly one input stream");
        break;
    case OpKind::Join:
        if (def_.input_streams.size() != 2 || def_.input_streams[0] == def_.input_streams[1]) {
            throw std::runtime_error("join needs two distinct input streams (build, probe)");
        }
        break;
    }
    if (def_.kind == OpKind::Aggregate) {
        if (def_.window.extent <= 0 || def_.window.slide <= 0 || def_.window.slide > def_.window.extent) {
            throw std::runtime_error("aggregate window needs 0 < slide <= extent");
        }
        if (def_.window.extent % def_.window.slide != 0) {
            throw std::runtime_error("window extent must be a multiple of the slide");
        }
    }
    if (def_.kind == OpKind::Filter && def_.pass_every <= 0) {
        throw std::runtime_error("filter pass_every must be positive");
    }
}

bool Operator::process(const Tuple& in, std::vector<Tuple>& out) {
    auto cov = covered_.find(in.stream);
    if (cov != covered_.end() && in.seq <= cov->second) {
        ++covered_drops_;
        return false;
    }
    if (cov == covered_.end()) {
        covered_[in.stream] = in.seq;
    } else {
        cov->second = in.seq;
    }

    switch (def_.kind) {
    case OpKind::Filter: {
        if (in.key % def_.pass_every == 0) {
            emit(Tuple{def_.output_stream, in.key, in.ts, in.seq, in.payload_bytes, 0}, in.ts, out);
        }
        break;
    }
    case OpKind::Join: {
        if (in.stream == def_.input_streams[0]) {
            build_[in.key].push_back(BuildEntry{in.seq, in.ts, in.payload_bytes, ++mark_});
        } else {
            auto it = build_.find(in.key);
            if (it != build_.end()) {
                for (const BuildEntry& e : it->second) {
                    emit(Tuple{def_.output_stream, in.key, in.ts, join_out_seq(in.seq, e.seq),
                               static_cast<std::uint32_t>(in.payload_bytes + e.payload_bytes), 0},
                         in.ts, out);
                }
            }
        }
        break;
    }
    case OpKind::Aggregate: {
        if (in.key < 0 || in.key > kMaxKey) throw std::runtime_error("aggregate key out of range");
        const SimTime extent = def_.window.extent;
        const SimTime slide = def_.window.slide;
        // Every window [s, s+extent) with s = k*slide containing in.ts.
        SimTime s = (in.ts / slide) * slide;
        for (; s > in.ts - extent && s >= 0; s -= slide) {
            if (s + extent <= watermark_) {
                ++late_drops_; // window already closed; input was not stream-monotone
                continue;
            }
            Acc& acc = accs_[{s, in.key}];
            ++acc.count;
            acc.mark = ++mark_;
        }
        break;
    }
    }
    bump_watermark(in.ts, out);
    return true;
}

void Operator::advance_watermark(SimTime ts, std::vector<Tuple>& out) { bump_watermark(ts, out); }

void Operator::bump_watermark(SimTime ts, std::vector<Tuple>& out) {
    if (ts <= watermark_) return;
    watermark_ = ts;
    flush_windows(out);
}

void Operator::flush_windows(std::vector<Tuple>& out) {
    if (def_.kind != OpKind::Aggregate) return;
    const SimTime extent = def_.window.extent;
    while (!accs_.empty()) {
        auto it = accs_.begin();
        const SimTime start = it->first.first;
        const SimTime end = start + extent;
        if (end > watermark_) break;
        const std::int64_t key = it->first.second;
        const std::int64_t count = it->second.count;
        accs_.erase(it);
        if (rules_.observe_floor >= 0 && start < rules_.observe_floor) {
            ++suppressed_;
            continue;
        }
        if (rules_.window_emit_after >= 0 && end <= rules_.window_emit_after) {
            ++suppressed_;
            continue;
        }
        out.push_back(Tuple{def_.output_stream, key, end, window_out_seq(start / def_.window.slide, key),
                            16, count});
    }
}

void Operator::emit(const Tuple& t, SimTime trigger_ts, std::vector<Tuple>& out) {
    if (rules_.emit_input_floor >= 0 && trigger_ts < rules_.emit_input_floor) {
        ++suppressed_;
        return;
    }
    out.push_back(t);
}

std::uint64_t Operator::record_count() const {
    std::uint64_t n = accs_.size();
    for (const auto& [key, entries] : build_) n += entries.size();
    return n;
}

std::uint64_t Operator::state_bytes() const {
    std::uint64_t total = kBlobHeaderBytes;
    for (const auto& [key, entries] : build_) {
        for (const BuildEntry& e : entries) total += e.payload_bytes + kRecordOverheadBytes;
    }
    total += accs_.size() * (16 + kRecordOverheadBytes);
    return total;
}

StateBlob Operator::extract(std::uint64_t since_mark) const {
    StateBlob blob;
    blob.kind = since_mark == 0 ? BlobKind::Full : BlobKind::Incremental;
    blob.query = def_.id;
    blob.version = mark_;
    blob.base_version = since_mark;
    blob.watermark = watermark_;
    blob.covered_seq = covered_;
    for (const auto& [key, entries] : build_) {
        for (const BuildEntry& e : entries) {
            if (e.mark <= since_mark) continue;
            blob.records.push_back(StateRecord{RecordKind::Entry, def_.input_streams[0], key, e.seq,
                                               e.ts, e.payload_bytes, 0});
        }
    }
    for (const auto& [wk, acc] : accs_) {
        if (acc.mark <= since_mark) continue;
        blob.records.push_back(StateRecord{RecordKind::Accumulator, -1, wk.second,
                                           static_cast<std::uint64_t>(wk.first / def_.window.slide),
                                           wk.first, 16, static_cast<std::uint64_t>(acc.count)});
    }
    return blob;
}

void Operator::load(const StateBlob& blob) {
    for (const StateRecord& r : blob.records) {
        if (r.kind == RecordKind::Entry) {
            auto& entries = build_[r.key];
            auto pos = std::lower_bound(entries.begin(), entries.end(), r.seq,
                                        [](const BuildEntry& e, std::uint64_t seq) { return e.seq < seq; });
            if (pos != entries.end() && pos->seq == r.seq) continue; // idempotent reload
            entries.insert(pos, BuildEntry{r.seq, r.ts, r.payload_bytes, ++mark_});
        } else {
            // A flattened chain can carry a group whose window closed (and was
            // emitted) before the chain's horizon; loading it would replay a
            // window the old host already delivered.
            if (def_.kind == OpKind::Aggregate && r.ts + def_.window.extent <= blob.watermark) {
                continue;
            }
            Acc& acc = accs_[{r.ts, r.key}];
            acc.count += static_cast<std::int64_t>(r.aux);
            acc.mark = ++mark_;
        }
    }
    for (const auto& [stream, seq] : blob.covered_seq) {
        auto it = covered_.find(stream);
        if (it == covered_.end() || it->second < seq) covered_[stream] = seq;
    }
    // Raise the event-time floor without flushing; any windows this closes are
    // emitted on the next tuple or explicit advance.
    watermark_ = std::max(watermark_, blob.watermark);
}

} // namespace migrasim
