#include "mcast/endhost/block.hpp"

namespace mcast::host {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::byte block_byte(uint64_t offset) {
  const uint64_t word = splitmix64(offset >> 3);
  return static_cast<std::byte>((word >> (8 * (offset & 7))) & 0xFF);
}

std::vector<std::byte> block_slice(uint64_t offset, std::size_t len) {
  std::vector<std::byte> out(len);
  uint64_t word_index = ~uint64_t{0};
  uint64_t word = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const uint64_t pos = offset + i;
    if ((pos >> 3) != word_index) {
      word_index = pos >> 3;
      word = splitmix64(word_index);
    }
    out[i] = static_cast<std::byte>((word >> (8 * (pos & 7))) & 0xFF);
  }
  return out;
}

void StreamDigest::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    hash_ ^= static_cast<uint8_t>(b);
    hash_ *= 0x100000001b3ull;
  }
  length_ += bytes.size();
}

}  // namespace mcast::host
