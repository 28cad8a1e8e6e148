#include "bodyrig/lighting/lighting.hpp"

#include <algorithm>
#include <string>

#include "bodyrig/core/splitmix.hpp"

namespace bodyrig::lighting {

StripeChannel controller_for_stripe(std::size_t stripe_index, std::size_t stripe_count) {
  if (stripe_index >= stripe_count) {
    throw Error(Errc::IndexOutOfRange,
                "stripe " + std::to_string(stripe_index) + " of " + std::to_string(stripe_count));
  }
  return {stripe_index / kStripesPerController, stripe_index % kStripesPerController};
}

std::size_t GrayImage::white_count() const noexcept {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{255}));
}

GrayImage generate_pattern(const PatternSpec& spec) {
  if (!spec.valid()) throw Error(Errc::InvalidArgument, "pattern spec invalid");
  GrayImage img{spec.width, spec.height, {}};
  const std::size_t n = std::size_t{spec.width} * spec.height;
  img.pixels.assign(n, 0);
  if (spec.kind == PatternKind::Black) return img;
  SplitMix64 rng(spec.seed);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.next_unit() < spec.density) img.pixels[i] = 255;
  }
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void RecordingLightController::apply(LightLevel level) {
  level_ = level;
  history_.push_back(level);
}

LightReport set_light_level(LightLevel level, std::span<LightController* const> controllers) {
  LightReport report;
  report.level = level;
  for (std::size_t i = 0; i < controllers.size(); ++i) {
    LightController& c = *controllers[i];
    if (!c.reachable()) {
      report.failures.push_back({i, c.name(), Errc::ControllerUnreachable});
      continue;
    }
    const bool changed = c.level() != level;
    if (changed) c.apply(level);
    report.acks.push_back({i, c.name(), level, changed});
  }
  return report;
}

}  // namespace bodyrig::lighting
