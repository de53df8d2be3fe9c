#include "mcast/dataplane/flow_table.hpp"

#include <algorithm>

#include "mcast/error.hpp"
#include "mcast/mgmt/message.hpp"

namespace mcast::dp {

Packet make_packet(uint32_t dst, uint32_t src, std::vector<std::byte> bytes) {
  expects(!bytes.empty() && bytes.size() <= kMaxPayload, "payload length out of range");
  Packet p;
  p.dst_addr = dst;
  p.src_addr = src;
  p.payload_len = static_cast<uint32_t>(bytes.size());
  p.payload = std::make_shared<const std::vector<std::byte>>(std::move(bytes));
  return p;
}

FlowEntry management_entry() {
  FlowEntry e;
  e.match = FlowMatch{mgmt::kMgmtAddress, std::nullopt};
  e.actions = {ToController{}};
  e.priority = kManagementPriority;
  return e;
}

void FlowTable::add(FlowEntry entry) {
  expects(!entry.actions.empty(), "flow entry needs at least one action");
  auto same = std::find_if(entries_.begin(), entries_.end(),
                           [&entry](const FlowEntry& e) { return e.match == entry.match; });
  if (same != entries_.end() && same->priority == entry.priority) {
    *same = std::move(entry);
    return;
  }
  if (same != entries_.end()) entries_.erase(same);
  auto pos = std::find_if(entries_.begin(), entries_.end(), [&entry](const FlowEntry& e) {
    return e.priority < entry.priority;
  });
  entries_.insert(pos, std::move(entry));
}

bool FlowTable::remove(const FlowMatch& match) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&match](const FlowEntry& e) { return e.match == match; });
  if (it == entries_.end()) return false;
  entries_.erase(it);
  return true;
}

void FlowTable::apply_update(std::span<const FlowEntry> add, std::span<const FlowMatch> remove) {
  for (const FlowMatch& m : remove) this->remove(m);
  for (const FlowEntry& e : add) this->add(e);
}

const std::vector<Action>* FlowTable::match_packet(const Packet& pkt) const {
  for (const FlowEntry& e : entries_) {
    if (e.match.matches(pkt)) return &e.actions;
  }
  return nullptr;
}

const FlowEntry* FlowTable::find(const FlowMatch& match) const {
  for (const FlowEntry& e : entries_) {
    if (e.match == match) return &e;
  }
  return nullptr;
}

}  // namespace mcast::dp
