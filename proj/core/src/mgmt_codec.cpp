#include "mcast/mgmt/codec.hpp"

#include <limits>
#include <set>

#include <fmt/format.h>

namespace mcast::mgmt {

Variant variant_of(const Body& body) {
  return static_cast<Variant>(body.index() + 1);
}

std::optional<Variant> expected_reply(Variant request) {
  switch (request) {
    case Variant::GroupJoin: return Variant::GroupJoinReply;
    case Variant::SessionInit: return Variant::SessionInitReply;
    default: return std::nullopt;
  }
}

DecodeError::DecodeError(DecodeErrorKind kind, std::size_t offset, const std::string& detail)
    : std::runtime_error(fmt::format("decode error at offset {}: {}", offset, detail)),
      kind_(kind), offset_(offset) {}

namespace {

class Writer {
 public:
  void u8(uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  void u16(uint16_t v) { put(v, 2); }
  void u32(uint32_t v) { put(v, 4); }
  void u64(uint64_t v) { put(v, 8); }
  std::vector<std::byte>& bytes() { return out_; }

 private:
  void put(uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
  }
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}
  uint8_t u8() { return static_cast<uint8_t>(get(1)); }
  uint16_t u16() { return static_cast<uint16_t>(get(2)); }
  uint32_t u32() { return static_cast<uint32_t>(get(4)); }
  uint64_t u64() { return get(8); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  uint64_t get(std::size_t width) {
    if (remaining() < width) {
      throw DecodeError(DecodeErrorKind::ShortFrame, pos_,
                        fmt::format("need {} bytes, have {}", width, remaining()));
    }
    uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | static_cast<uint8_t>(in_[pos_ + i]);
    pos_ += width;
    return v;
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

void check_trees(const std::vector<TreeShare>& trees) {
  if (trees.size() > kMaxTreesPerMessage) {
    throw EncodeError(fmt::format("{} trees exceeds the limit of {}", trees.size(), kMaxTreesPerMessage));
  }
  std::set<RouteTag> seen;
  for (const TreeShare& t : trees) {
    if (t.route.value == 0 || t.route.value > RouteTag::kMax) {
      throw EncodeError(fmt::format("route tag {} outside 1..4095", t.route.value));
    }
    if (!seen.insert(t.route).second) throw EncodeError("duplicate route tag");
    if (t.share_bps % 1000 != 0 ||
        t.share_bps / 1000 > std::numeric_limits<uint32_t>::max()) {
      throw EncodeError(fmt::format("share {} bps is not representable in kbps", t.share_bps));
    }
  }
}

void write_trees(Writer& w, const std::vector<TreeShare>& trees) {
  check_trees(trees);
  w.u8(static_cast<uint8_t>(trees.size()));
  for (const TreeShare& t : trees) {
    w.u16(t.route.value);
    w.u32(static_cast<uint32_t>(t.share_bps / 1000));
  }
}

std::vector<TreeShare> read_trees(Reader& r) {
  const std::size_t count = r.u8();
  std::vector<TreeShare> trees;
  std::set<RouteTag> seen;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    RouteTag tag{r.u16()};
    if (tag.value == 0 || tag.value > RouteTag::kMax) {
      throw DecodeError(DecodeErrorKind::InvalidField, at, fmt::format("route tag {}", tag.value));
    }
    if (!seen.insert(tag).second) {
      throw DecodeError(DecodeErrorKind::InvalidField, at, "duplicate route tag");
    }
    trees.push_back({tag, static_cast<uint64_t>(r.u32()) * 1000});
  }
  return trees;
}

Status read_status(Reader& r) {
  const std::size_t at = r.offset();
  const uint8_t s = r.u8();
  if (s > static_cast<uint8_t>(Status::Rejected)) {
    throw DecodeError(DecodeErrorKind::InvalidField, at, fmt::format("status {}", s));
  }
  return static_cast<Status>(s);
}

struct PayloadWriter {
  Writer& w;
  void operator()(const GroupJoin& m) { w.u32(m.group_id); w.u16(m.receiver.value); }
  void operator()(const GroupJoinReply& m) { w.u32(m.group_id); w.u8(static_cast<uint8_t>(m.status)); }
  void operator()(const GroupLeave& m) { w.u32(m.group_id); w.u16(m.receiver.value); }
  void operator()(const SessionInit& m) {
    w.u32(m.group_id);
    w.u16(m.sender.value);
    w.u64(m.block_len_bytes);
  }
  void operator()(const SessionInitReply& m) {
    if (m.status == Status::Ok && m.trees.empty()) {
      throw EncodeError("accepted SessionInitReply must carry at least one tree");
    }
    if (m.status != Status::Ok && !m.trees.empty()) {
      throw EncodeError("refused SessionInitReply must not carry trees");
    }
    w.u32(m.session_id);
    w.u8(static_cast<uint8_t>(m.status));
    write_trees(w, m.trees);
  }
  void operator()(const SessionEnd& m) { w.u32(m.session_id); }
  void operator()(const NetworkUpdate& m) {
    w.u32(m.session_id);
    write_trees(w, m.trees);
  }
  void operator()(const StatsReport& m) {
    w.u32(m.session_id);
    w.u16(m.receiver.value);
    w.u64(m.bytes_received);
    w.u64(m.window.ns());
  }
};

}  // namespace

std::vector<std::byte> encode(const ManagementMessage& msg) {
  Writer w;
  w.u16(0);  // patched below
  w.u8(static_cast<uint8_t>(variant_of(msg.body)));
  w.u32(msg.requester_addr);
  std::visit(PayloadWriter{w}, msg.body);
  auto& out = w.bytes();
  if (out.size() > std::numeric_limits<uint16_t>::max()) throw EncodeError("frame too long");
  out[0] = static_cast<std::byte>(out.size() >> 8);
  out[1] = static_cast<std::byte>(out.size() & 0xFF);
  return std::move(out);
}

ManagementMessage decode(std::span<const std::byte> bytes) {
  Reader r(bytes);
  const uint16_t frame_len = r.u16();
  if (frame_len != bytes.size()) {
    throw DecodeError(DecodeErrorKind::LengthMismatch, 0,
                      fmt::format("frame_len {} but {} bytes supplied", frame_len, bytes.size()));
  }
  const std::size_t variant_at = r.offset();
  const uint8_t code = r.u8();
  if (code < 1 || code > 8) {
    throw DecodeError(DecodeErrorKind::UnknownVariant, variant_at,
                      fmt::format("variant code {:#04x}", code));
  }
  ManagementMessage msg;
  msg.requester_addr = r.u32();
  switch (code) {
    case 1: {
      GroupJoin m;
      m.group_id = r.u32();
      m.receiver = NodeId{r.u16()};
      msg.body = m;
      break;
    }
    case 2: {
      GroupJoinReply m;
      m.group_id = r.u32();
      m.status = read_status(r);
      msg.body = m;
      break;
    }
    case 3: {
      GroupLeave m;
      m.group_id = r.u32();
      m.receiver = NodeId{r.u16()};
      msg.body = m;
      break;
    }
    case 4: {
      SessionInit m;
      m.group_id = r.u32();
      m.sender = NodeId{r.u16()};
      m.block_len_bytes = r.u64();
      msg.body = m;
      break;
    }
    case 5: {
      SessionInitReply m;
      m.session_id = r.u32();
      const std::size_t status_at = r.offset();
      m.status = read_status(r);
      m.trees = read_trees(r);
      if ((m.status == Status::Ok) == m.trees.empty()) {
        throw DecodeError(DecodeErrorKind::InvalidField, status_at,
                          "tree count inconsistent with status");
      }
      msg.body = std::move(m);
      break;
    }
    case 6: {
      SessionEnd m;
      m.session_id = r.u32();
      msg.body = m;
      break;
    }
    case 7: {
      NetworkUpdate m;
      m.session_id = r.u32();
      m.trees = read_trees(r);
      msg.body = std::move(m);
      break;
    }
    case 8: {
      StatsReport m;
      m.session_id = r.u32();
      m.receiver = NodeId{r.u16()};
      m.bytes_received = r.u64();
      m.window = sim::SimTime::from_ns(r.u64());
      msg.body = m;
      break;
    }
    default:
      break;  // unreachable, range checked above
  }
  if (r.remaining() != 0) {
    throw DecodeError(DecodeErrorKind::LengthMismatch, r.offset(),
                      fmt::format("{} trailing bytes", r.remaining()));
  }
  return msg;
}

}  // namespace mcast::mgmt
