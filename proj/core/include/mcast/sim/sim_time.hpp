#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace mcast::sim {

// Virtual time in integer nanoseconds. Used both as an instant and as a
// duration; subtraction never goes below zero.
class SimTime {
 public:
  constexpr SimTime() = default;

  static constexpr SimTime from_ns(uint64_t ns) { return SimTime(ns); }
  static constexpr SimTime from_us(uint64_t us) { return SimTime(us * 1'000); }
  static constexpr SimTime from_ms(uint64_t ms) { return SimTime(ms * 1'000'000); }
  static constexpr SimTime from_seconds(uint64_t s) {
    return SimTime(s * 1'000'000'000);
  }
  static constexpr SimTime max() {
    return SimTime(std::numeric_limits<uint64_t>::max());
  }

  constexpr uint64_t ns() const { return ns_; }
  constexpr double seconds() const { return static_cast<double>(ns_) * 1e-9; }

  constexpr SimTime operator+(SimTime other) const {
    if (ns_ > std::numeric_limits<uint64_t>::max() - other.ns_) {
      return max();
    }
    return SimTime(ns_ + other.ns_);
  }
  constexpr SimTime operator-(SimTime other) const {
    if (other.ns_ > ns_) {
      throw std::logic_error("SimTime subtraction underflow");
    }
    return SimTime(ns_ - other.ns_);
  }
  constexpr SimTime& operator+=(SimTime other) { return *this = *this + other; }

  constexpr auto operator<=>(const SimTime&) const = default;

 private:
  constexpr explicit SimTime(uint64_t ns) : ns_(ns) {}
  uint64_t ns_ = 0;
};

// Time to serialize `bytes` onto a link of `capacity_bps`, rounded up so
// a link never runs faster than its capacity.
constexpr SimTime serialization_time(uint64_t bytes, uint64_t capacity_bps) {
  const unsigned __int128 bit_ns =
      static_cast<unsigned __int128>(bytes) * 8u * 1'000'000'000u;
  const unsigned __int128 ns = (bit_ns + capacity_bps - 1) / capacity_bps;
  return SimTime::from_ns(static_cast<uint64_t>(ns));
}

}  // namespace mcast::sim
