#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcast/mgmt/message.hpp"

namespace mcast::mgmt {

// Frame layout, all integers big-endian:
//   u16 frame_len   total frame length including this field
//   u8  variant     1..8, see Variant
//   u32 requester_addr
//   payload:
//     GroupJoin         u32 group_id, u16 receiver
//     GroupJoinReply    u32 group_id, u8 status
//     GroupLeave        u32 group_id, u16 receiver
//     SessionInit       u32 group_id, u16 sender, u64 block_len_bytes
//     SessionInitReply  u32 session_id, u8 status, tree list
//     SessionEnd        u32 session_id
//     NetworkUpdate     u32 session_id, tree list
//     StatsReport       u32 session_id, u16 receiver, u64 bytes, u64 window_ns
//   tree list: u8 count, then per tree u16 route_tag, u32 share_kbps
inline constexpr std::size_t kFrameHeaderLen = 7;
inline constexpr std::size_t kMaxTreesPerMessage = 255;

class EncodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DecodeErrorKind : uint8_t {
  ShortFrame,
  UnknownVariant,
  LengthMismatch,
  InvalidField,
};

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrorKind kind, std::size_t offset, const std::string& detail);
  DecodeErrorKind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  DecodeErrorKind kind_;
  std::size_t offset_;
};

// Throws EncodeError for messages that break their own invariants: an Ok
// init reply without trees, more than 255 trees, a tag outside 1..4095,
// or a share that is not a whole number of kbps.
std::vector<std::byte> encode(const ManagementMessage& msg);

// Inverse of encode; rejects every byte string encode cannot produce.
ManagementMessage decode(std::span<const std::byte> bytes);

}  // namespace mcast::mgmt
