#include "mcast/endhost/load_splitter.hpp"

#include <algorithm>

#include "mcast/error.hpp"

namespace mcast::host {

namespace {

constexpr unsigned __int128 kScale = 1'000'000'000;  // bit-ns per bit

unsigned __int128 cost_of(uint32_t wire_bytes) {
  return static_cast<unsigned __int128>(wire_bytes) * 8 * kScale;
}

}  // namespace

LoadSplitter::LoadSplitter(PacingMode mode, uint32_t quantum_bytes)
    : mode_(mode), quantum_bytes_(quantum_bytes) {
  expects(quantum_bytes > 0, "LoadSplitter: quantum must be positive");
}

unsigned __int128 LoadSplitter::depth() const {
  return static_cast<unsigned __int128>(kBucketPackets) * cost_of(quantum_bytes_);
}

void LoadSplitter::set_trees(std::span<const TreeShare> trees, SimTime now, uint64_t start_index) {
  std::vector<Lane> previous = std::move(lanes_);
  for (Lane& lane : previous) refill(lane, now);
  lanes_.clear();
  in_turn_ = false;
  current_ = 0;
  if (trees.empty()) return;
  uint64_t min_share = trees.front().share_bps;
  for (const TreeShare& t : trees) {
    expects(t.share_bps > 0, "LoadSplitter: zero share");
    min_share = std::min(min_share, t.share_bps);
  }
  for (const TreeShare& t : trees) {
    Lane lane;
    lane.tree = t;
    lane.rate_bps = mode_ == PacingMode::Paced ? t.share_bps : 2 * t.share_bps;
    lane.quantum = static_cast<uint64_t>(
        static_cast<unsigned __int128>(t.share_bps) * quantum_bytes_ / min_share);
    lane.tokens = depth();
    // A tree that survives unchanged keeps its bucket level; only new
    // trees start with a full burst allowance.
    for (const Lane& old : previous) {
      if (old.tree == t) lane.tokens = old.tokens;
    }
    lane.refilled_at = now;
    lanes_.push_back(lane);
  }
  current_ = static_cast<std::size_t>(start_index % lanes_.size());
}

void LoadSplitter::refill(Lane& lane, SimTime now) const {
  if (now <= lane.refilled_at) return;
  const uint64_t dt = static_cast<uint64_t>((now - lane.refilled_at).ns());
  const unsigned __int128 added = static_cast<unsigned __int128>(lane.rate_bps) * dt;
  lane.tokens = std::min(depth(), lane.tokens + added);
  lane.refilled_at = now;
}

SplitDecision LoadSplitter::next(SimTime now, uint32_t wire_bytes) {
  expects(wire_bytes > 0 && wire_bytes <= quantum_bytes_, "LoadSplitter: bad packet size");
  if (lanes_.empty()) return SplitBlocked{SimTime::max()};
  for (Lane& lane : lanes_) refill(lane, now);

  const unsigned __int128 cost = cost_of(wire_bytes);
  for (std::size_t visit = 0; visit <= lanes_.size(); ++visit) {
    Lane& lane = lanes_[current_];
    if (!in_turn_) {
      lane.deficit += lane.quantum;
      in_turn_ = true;
    }
    if (lane.deficit >= wire_bytes && lane.tokens >= cost) {
      lane.deficit -= wire_bytes;
      lane.tokens -= cost;
      return SplitChoice{lane.tree.route};
    }
    // A lane out of tokens forfeits the rest of its turn.
    if (lane.deficit >= wire_bytes) lane.deficit = 0;
    current_ = (current_ + 1) % lanes_.size();
    in_turn_ = false;
  }

  uint64_t wait = UINT64_MAX;
  for (const Lane& lane : lanes_) {
    const unsigned __int128 need = cost - lane.tokens;
    const unsigned __int128 dt = (need + lane.rate_bps - 1) / lane.rate_bps;
    wait = std::min<uint64_t>(wait, static_cast<uint64_t>(dt));
  }
  return SplitBlocked{now + SimTime::from_ns(static_cast<int64_t>(wait))};
}

std::vector<TreeShare> LoadSplitter::trees() const {
  std::vector<TreeShare> out;
  for (const Lane& lane : lanes_) out.push_back(lane.tree);
  return out;
}

}  // namespace mcast::host
