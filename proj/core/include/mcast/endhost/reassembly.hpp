#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "mcast/dataplane/packet.hpp"
#include "mcast/sim/sim_time.hpp"

namespace mcast::host {

using dp::Packet;
using sim::SimTime;

// In-order delivery keyed by global_seq over an unreliable transport.
//
// Packets below next_expected() are duplicates. When an insert would push
// the buffer past its bound, the gap in front of the lowest buffered seq
// is declared lost: next_expected jumps there and the contiguous run is
// flushed. Nothing is ever delivered out of order and no buffered packet
// is dropped. The same happens once a gap has held packets back for
// longer than the gap timeout, since paths are FIFO and a packet that late
// was lost on the way.
class ReassemblyBuffer {
 public:
  static constexpr std::size_t kDefaultLimit = 4096;
  static constexpr SimTime kDefaultGapTimeout = SimTime::from_ms(500);

  explicit ReassemblyBuffer(std::size_t limit = kDefaultLimit,
                            SimTime gap_timeout = kDefaultGapTimeout);

  // Packets that became deliverable, in global_seq order.
  std::vector<Packet> insert(Packet pkt, SimTime now = {});
  // Gives up a gap that has outlived the timeout.
  std::vector<Packet> expire(SimTime now);
  // When the current gap times out; nullopt while nothing is held back.
  std::optional<SimTime> gap_deadline() const;

  uint64_t next_expected() const { return next_expected_; }
  std::size_t buffered() const { return pending_.size(); }
  std::size_t limit() const { return limit_; }
  uint64_t duplicates() const { return duplicates_; }
  uint64_t skipped() const { return skipped_; }  // seqs given up as lost
  std::size_t max_buffered() const { return max_buffered_; }

 private:
  void flush(std::vector<Packet>& out);
  void skip_gap(std::vector<Packet>& out);
  void restart_gap_clock(SimTime now);

  std::size_t limit_;
  SimTime gap_timeout_;
  std::optional<SimTime> gap_since_;
  uint64_t next_expected_ = 0;
  std::map<uint64_t, Packet> pending_;
  uint64_t duplicates_ = 0;
  uint64_t skipped_ = 0;
  std::size_t max_buffered_ = 0;
};

}  // namespace mcast::host
