#include "mcast/endhost/reassembly.hpp"

#include <algorithm>

#include "mcast/error.hpp"

namespace mcast::host {

ReassemblyBuffer::ReassemblyBuffer(std::size_t limit, SimTime gap_timeout)
    : limit_(limit), gap_timeout_(gap_timeout) {
  expects(limit > 0, "ReassemblyBuffer: limit must be positive");
  expects(gap_timeout > SimTime{}, "ReassemblyBuffer: gap timeout must be positive");
}

void ReassemblyBuffer::flush(std::vector<Packet>& out) {
  auto it = pending_.begin();
  while (it != pending_.end() && it->first == next_expected_) {
    out.push_back(std::move(it->second));
    it = pending_.erase(it);
    ++next_expected_;
  }
}

void ReassemblyBuffer::skip_gap(std::vector<Packet>& out) {
  const uint64_t lowest = pending_.begin()->first;
  skipped_ += lowest - next_expected_;
  next_expected_ = lowest;
  flush(out);
}

void ReassemblyBuffer::restart_gap_clock(SimTime now) {
  if (pending_.empty()) {
    gap_since_.reset();
  } else {
    gap_since_ = now;
  }
}

std::optional<SimTime> ReassemblyBuffer::gap_deadline() const {
  if (!gap_since_) return std::nullopt;
  return *gap_since_ + gap_timeout_;
}

std::vector<Packet> ReassemblyBuffer::expire(SimTime now) {
  std::vector<Packet> out;
  if (gap_since_ && now >= *gap_since_ + gap_timeout_) {
    skip_gap(out);
    restart_gap_clock(now);
  }
  return out;
}

std::vector<Packet> ReassemblyBuffer::insert(Packet pkt, SimTime now) {
  std::vector<Packet> out = expire(now);
  const uint64_t seq = pkt.global_seq;
  if (seq < next_expected_ || pending_.contains(seq)) {
    ++duplicates_;
    return out;
  }
  if (seq == next_expected_) {
    out.push_back(std::move(pkt));
    ++next_expected_;
    flush(out);
    restart_gap_clock(now);
    return out;
  }
  pending_.emplace(seq, std::move(pkt));
  if (!gap_since_) gap_since_ = now;
  if (pending_.size() > limit_) {
    skip_gap(out);
    restart_gap_clock(now);
  }
  max_buffered_ = std::max(max_buffered_, pending_.size());
  return out;
}

}  // namespace mcast::host
