#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace bodyrig {

// Durations and timestamps share one representation: microseconds. Timestamps
// count from the owning clock's epoch (virtual time zero in simulation,
// process start in deployment).
using Micros = std::chrono::microseconds;

constexpr double to_seconds(Micros d) noexcept {
  return static_cast<double>(d.count()) * 1e-6;
}

inline Micros from_seconds(double s) noexcept {
  return Micros{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

// Rounds up so a modeled operation never completes early.
inline Micros ceil_seconds(double s) noexcept {
  return Micros{static_cast<std::int64_t>(std::ceil(s * 1e6 - 1e-6))};
}

constexpr std::int64_t to_millis(Micros d) noexcept { return d.count() / 1000; }

}  // namespace bodyrig
