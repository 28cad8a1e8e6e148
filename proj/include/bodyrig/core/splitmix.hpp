#pragma once

#include <cstdint>

namespace bodyrig {

// SplitMix64 (Steele, Lea, Flood). Every reproducible random stream in the
// system (reconnect jitter, mock frames, dot patterns) comes from this
// generator so outputs are identical across platforms and standard libraries.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  constexpr double next_unit() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

// FNV-1a over a byte string; used to derive seeds from identifying fields.
constexpr std::uint64_t fnv1a64(const char* data, std::size_t size,
                                std::uint64_t hash = 0xCBF29CE484222325ULL) noexcept {
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= static_cast<unsigned char>(data[i]);
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

}  // namespace bodyrig
