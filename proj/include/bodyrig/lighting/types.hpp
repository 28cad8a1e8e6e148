#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace bodyrig::lighting {

// The MOSFET boards switch stripes between three levels only.
enum class LightLevel : int { Off = 0, Half = 50, Full = 100 };

constexpr int percent(LightLevel level) noexcept { return static_cast<int>(level); }

constexpr std::optional<LightLevel> light_level_from_percent(int value) noexcept {
  switch (value) {
    case 0: return LightLevel::Off;
    case 50: return LightLevel::Half;
    case 100: return LightLevel::Full;
    default: return std::nullopt;
  }
}

enum class PatternKind { Black, RandomDot };

constexpr std::string_view to_string(PatternKind k) noexcept {
  return k == PatternKind::Black ? "black" : "dots";
}

constexpr std::optional<PatternKind> pattern_kind_from_string(std::string_view s) noexcept {
  if (s == "black") return PatternKind::Black;
  if (s == "dots") return PatternKind::RandomDot;
  return std::nullopt;
}

struct PatternSpec {
  PatternKind kind = PatternKind::RandomDot;
  std::uint64_t seed = 0;
  double density = 0.5;
  std::uint32_t width = 1920;
  std::uint32_t height = 1080;

  static PatternSpec black(std::uint32_t w, std::uint32_t h) {
    return {PatternKind::Black, 0, 0.5, w, h};
  }
  static PatternSpec dots(std::uint64_t seed, double density, std::uint32_t w, std::uint32_t h) {
    return {PatternKind::RandomDot, seed, density, w, h};
  }

  // Black ignores seed and density.
  bool valid() const noexcept {
    if (width == 0 || height == 0) return false;
    return kind == PatternKind::Black || (density > 0.0 && density < 1.0);
  }

  friend bool operator==(const PatternSpec&, const PatternSpec&) = default;
};

}  // namespace bodyrig::lighting
