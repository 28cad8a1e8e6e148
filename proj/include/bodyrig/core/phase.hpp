#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace bodyrig {

// The two exposures of one capture: plain light with projectors black, then
// the projected dot pattern.
enum class Phase { Texture, Pattern };

inline constexpr std::array<Phase, 2> kPhases{Phase::Texture, Phase::Pattern};

constexpr std::string_view to_string(Phase p) noexcept {
  return p == Phase::Texture ? "texture" : "pattern";
}

constexpr std::optional<Phase> phase_from_string(std::string_view s) noexcept {
  if (s == "texture") return Phase::Texture;
  if (s == "pattern") return Phase::Pattern;
  return std::nullopt;
}

}  // namespace bodyrig
