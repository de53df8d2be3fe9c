#include "mcast/sim/simulator.hpp"

#include <algorithm>
#include <ostream>

#include "mcast/error.hpp"

namespace mcast::sim {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::PacketArrival: return "arrival";
    case EventKind::QueueService: return "service";
    case EventKind::TimerFire: return "timer";
    case EventKind::HostAction: return "host";
  }
  return "?";
}

Simulator::Simulator(uint64_t seed) : rng_(seed) {}

uint64_t Simulator::schedule(SimTime fire_at, EventKind kind, uint32_t target,
                             std::function<void()> action) {
  expects(fire_at >= now_, "schedule: event time is in the past");
  const uint64_t seq = next_seq_++;
  heap_.push_back(Event{fire_at, seq, kind, target, std::move(action)});
  std::push_heap(heap_.begin(), heap_.end(), Later{});
  return seq;
}

std::size_t Simulator::run_until(SimTime deadline) {
  expects(deadline >= now_, "run_until: deadline is in the past");
  std::size_t count = 0;
  while (!heap_.empty() && heap_.front().fire_at <= deadline) {
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    Event ev = std::move(heap_.back());
    heap_.pop_back();
    now_ = ev.fire_at;
    if (trace_ != nullptr) {
      *trace_ << ev.fire_at.ns() << ' ' << ev.seq << ' ' << to_string(ev.kind)
              << ' ' << ev.target << '\n';
    }
    if (ev.action) ev.action();
    ++count;
    ++processed_;
  }
  now_ = deadline;
  return count;
}

uint64_t Simulator::next_random(uint64_t bound) {
  expects(bound > 0, "next_random: bound must be positive");
  std::uniform_int_distribution<uint64_t> dist(0, bound - 1);
  return dist(rng_);
}

}  // namespace mcast::sim
