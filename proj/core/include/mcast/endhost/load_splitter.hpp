#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "mcast/mgmt/message.hpp"
#include "mcast/sim/sim_time.hpp"

namespace mcast::host {

using mgmt::TreeShare;
using routing::RouteTag;
using sim::SimTime;

// Paced senders refill each tree's bucket at its share; unpaced senders
// at twice the share, which overdrives the bottleneck on purpose.
enum class PacingMode : uint8_t { Paced, Unpaced };

struct SplitChoice {
  RouteTag route;
};
struct SplitBlocked {
  SimTime until;  // SimTime::max() while paused
};
using SplitDecision = std::variant<SplitChoice, SplitBlocked>;

// Deficit round robin across trees, weighted by share, gated by one token
// bucket per tree. Token arithmetic is exact: bucket levels are kept in
// bit-nanoseconds (bits scaled by 1e9) so refills never round.
class LoadSplitter {
 public:
  static constexpr uint32_t kBucketPackets = 2;

  explicit LoadSplitter(PacingMode mode = PacingMode::Paced, uint32_t quantum_bytes = 1500);

  // Replaces the tree set. Deficits restart at zero; buckets start full
  // except for trees present before with the same tag and share, which keep
  // their level. DRR starts its rotation at `start_index` modulo the count.
  void set_trees(std::span<const TreeShare> trees, SimTime now, uint64_t start_index = 0);

  SplitDecision next(SimTime now, uint32_t wire_bytes);

  bool paused() const { return lanes_.empty(); }
  PacingMode mode() const { return mode_; }
  std::vector<TreeShare> trees() const;

 private:
  struct Lane {
    TreeShare tree;
    uint64_t rate_bps = 0;
    uint64_t quantum = 0;
    uint64_t deficit = 0;
    unsigned __int128 tokens = 0;
    SimTime refilled_at;
  };

  void refill(Lane& lane, SimTime now) const;
  unsigned __int128 depth() const;

  PacingMode mode_;
  uint32_t quantum_bytes_;
  std::vector<Lane> lanes_;
  std::size_t current_ = 0;
  bool in_turn_ = false;
};

}  // namespace mcast::host
