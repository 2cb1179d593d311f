#include "migrasim/simnet.hpp"

#include <algorithm>
#include <stdexcept>

namespace migrasim {

void EventQueue::schedule(SimTime at, Action action) {
    if (at < now_) {
        throw std::runtime_error("cannot schedule event at " + std::to_string(at) +
                                 " ns: current time is " + std::to_string(now_) + " ns");
    }
    heap_.push_back(Event{at, next_seq_++, std::move(action)});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
}

SimTime EventQueue::run_until_quiescent(std::uint64_t max_events) {
    std::uint64_t fired = 0;
    while (!heap_.empty()) {
        std::pop_heap(heap_.begin(), heap_.end(), Later{});
        Event ev = std::move(heap_.back());
        heap_.pop_back();
        now_ = ev.at;
        ++processed_;
        if (++fired > max_events) {
            throw std::runtime_error("event budget exceeded (" + std::to_string(max_events) +
                                     " events): possible control-plane livelock");
        }
        ev.action();
    }
    return now_;
}

void Network::add_link(const LinkSpec& spec) {
    if (spec.a == spec.b) throw std::runtime_error("link endpoints must differ");
    if (spec.bandwidth_bps <= 0) throw std::runtime_error("link bandwidth must be positive");
    if (spec.latency < 0) throw std::runtime_error("link latency must be non-negative");
    if (has_link(spec.a, spec.b)) throw std::runtime_error("duplicate link");
    links_.push_back(Directed{spec.a, spec.b, spec.bandwidth_bps, spec.latency});
    links_.push_back(Directed{spec.b, spec.a, spec.bandwidth_bps, spec.latency});
}

int Network::link_index(int src, int dst) const {
    for (std::size_t i = 0; i < links_.size(); ++i) {
        if (links_[i].src == src && links_[i].dst == dst) return static_cast<int>(i);
    }
    return -1;
}

std::int64_t Network::bandwidth_bps(int src, int dst) const {
    int i = link_index(src, dst);
    if (i < 0) throw std::runtime_error("no link between nodes");
    return links_[static_cast<std::size_t>(i)].bandwidth_bps;
}

SimTime Network::latency(int src, int dst) const {
    int i = link_index(src, dst);
    if (i < 0) throw std::runtime_error("no link between nodes");
    return links_[static_cast<std::size_t>(i)].latency;
}

SimTime Network::send(int src, int dst, std::uint64_t bytes, std::uint64_t msg_id, DeliverFn deliver) {
    int i = link_index(src, dst);
    if (i < 0) {
        ++dropped_;
        return -1;
    }
    Directed& link = links_[static_cast<std::size_t>(i)];
    SimTime tx_start = std::max(queue_->now(), link.busy_until);
    SimTime tx_end = tx_start + transmission_ns(bytes, link.bandwidth_bps);
    link.busy_until = tx_end;
    SimTime arrival = tx_end + link.latency;
    ++sent_;
    queue_->schedule(arrival, [this, dst, msg_id, deliver = std::move(deliver)]() {
        ++delivered_;
        deliver(dst, msg_id);
    });
    return arrival;
}

} // namespace migrasim
