#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mcast::host {

// Content of the data block at a byte offset. Deterministic filler so a
// receiver's stream can be checked against the sender's block.
std::byte block_byte(uint64_t offset);
std::vector<std::byte> block_slice(uint64_t offset, std::size_t len);

// Incremental 64-bit FNV-1a.
class StreamDigest {
 public:
  void update(std::span<const std::byte> bytes);
  uint64_t value() const { return hash_; }
  uint64_t length() const { return length_; }

 private:
  uint64_t hash_ = 0xcbf29ce484222325ull;
  uint64_t length_ = 0;
};

}  // namespace mcast::host
