#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "mcast/dataplane/packet.hpp"

namespace mcast::dp {

using topo::NodeId;

// Ports are named by the neighbor the link leads to; at most one link
// joins a node pair, so this is stable across topology edits.
struct Output {
  NodeId port;
  friend bool operator==(const Output&, const Output&) = default;
};
struct ToController {
  friend bool operator==(const ToController&, const ToController&) = default;
};
using Action = std::variant<Output, ToController>;

struct FlowMatch {
  uint32_t dst_addr = 0;
  std::optional<RouteTag> route_tag;  // nullopt matches any tag
  friend bool operator==(const FlowMatch&, const FlowMatch&) = default;
  bool matches(const Packet& pkt) const {
    return pkt.dst_addr == dst_addr && (!route_tag || *route_tag == pkt.route_tag);
  }
};

inline constexpr uint16_t kManagementPriority = 0xFFFF;
inline constexpr uint16_t kDataPriority = 100;

struct FlowEntry {
  FlowMatch match;
  std::vector<Action> actions;
  uint16_t priority = kDataPriority;
  friend bool operator==(const FlowEntry&, const FlowEntry&) = default;
};

// Entry that sends every management-address packet to the controller.
FlowEntry management_entry();

// Entries ordered by descending priority, then insertion order; at most
// one entry per exact match.
class FlowTable {
 public:
  // Replaces an entry with the same match (in place when the priority is
  // unchanged), otherwise inserts.
  void add(FlowEntry entry);
  bool remove(const FlowMatch& match);
  // Removals first, then additions.
  void apply_update(std::span<const FlowEntry> add, std::span<const FlowMatch> remove);

  // Highest-priority matching entry's actions, nullptr on a miss.
  const std::vector<Action>* match_packet(const Packet& pkt) const;
  const FlowEntry* find(const FlowMatch& match) const;

  std::span<const FlowEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<FlowEntry> entries_;
};

}  // namespace mcast::dp
