#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string_view>
#include <vector>

#include "mcast/sim/sim_time.hpp"

namespace mcast::sim {

enum class EventKind : uint8_t {
  PacketArrival,
  QueueService,
  TimerFire,
  HostAction,
};

std::string_view to_string(EventKind kind);

// Target used for events addressed to the control plane rather than a node.
inline constexpr uint32_t kControllerTarget = 0xFFFF'FFFFu;

struct Event {
  SimTime fire_at;
  uint64_t seq = 0;
  EventKind kind = EventKind::HostAction;
  uint32_t target = 0;
  std::function<void()> action;
};

// Single-threaded discrete-event engine. Events fire in (fire_at, seq)
// order; seq is the insertion counter, so equal-time events run FIFO.
// Every component of one simulation shares the engine's seeded RNG.
class Simulator {
 public:
  explicit Simulator(uint64_t seed);

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;
  Simulator(Simulator&&) = default;
  Simulator& operator=(Simulator&&) = default;

  SimTime now() const { return now_; }

  // Throws ContractViolation when fire_at < now(). Returns the event's seq.
  uint64_t schedule(SimTime fire_at, EventKind kind, uint32_t target,
                    std::function<void()> action);
  uint64_t schedule_in(SimTime delay, EventKind kind, uint32_t target,
                       std::function<void()> action) {
    return schedule(now_ + delay, kind, target, std::move(action));
  }

  // Processes every event with fire_at <= deadline, then sets now() to
  // deadline. Returns the number of events processed.
  std::size_t run_until(SimTime deadline);

  // Uniform integer in [0, bound); bound == 0 is a contract violation.
  uint64_t next_random(uint64_t bound);

  std::size_t pending() const { return heap_.size(); }
  uint64_t processed() const { return processed_; }

  // When set, one line "fire_at_ns seq kind target" is written per event.
  void set_trace(std::ostream* trace) { trace_ = trace; }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.seq > b.seq;
    }
  };

  SimTime now_;
  uint64_t next_seq_ = 0;
  uint64_t processed_ = 0;
  std::vector<Event> heap_;
  std::mt19937_64 rng_;
  std::ostream* trace_ = nullptr;
};

}  // namespace mcast::sim
