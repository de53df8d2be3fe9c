#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "mcast/routing/tree.hpp"

namespace mcast::dp {

using routing::RouteTag;

inline constexpr uint32_t kHeaderLen = 42;
inline constexpr uint32_t kMtu = 1500;
inline constexpr uint32_t kMaxPayload = kMtu - kHeaderLen;

using Payload = std::shared_ptr<const std::vector<std::byte>>;

// The payload buffer is shared between the copies a switch replicates.
struct Packet {
  uint32_t dst_addr = 0;
  uint32_t src_addr = 0;
  RouteTag route_tag;
  uint32_t session_id = 0;
  uint64_t subflow_seq = 0;
  uint64_t global_seq = 0;
  uint32_t payload_len = 0;
  Payload payload;

  uint32_t wire_size() const { return kHeaderLen + payload_len; }
};

// Wraps bytes as a payload; the length must be 1..kMaxPayload.
Packet make_packet(uint32_t dst, uint32_t src, std::vector<std::byte> bytes);

}  // namespace mcast::dp
