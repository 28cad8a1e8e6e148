#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bodyrig/core/error.hpp"
#include "bodyrig/lighting/types.hpp"

namespace bodyrig::lighting {

// One MOSFET board drives this many LED stripes.
inline constexpr std::size_t kStripesPerController = 4;

struct StripeChannel {
  std::size_t controller = 0;
  std::size_t channel = 0;
  friend bool operator==(const StripeChannel&, const StripeChannel&) = default;
};

// Throws Error{IndexOutOfRange} when stripe_index >= stripe_count.
StripeChannel controller_for_stripe(std::size_t stripe_index, std::size_t stripe_count);

constexpr std::size_t controllers_for_stripes(std::size_t stripe_count) noexcept {
  return (stripe_count + kStripesPerController - 1) / kStripesPerController;
}

// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t white_count() const noexcept;
};

// Black: all zero. RandomDot: one SplitMix64 draw per pixel in row-major
// order, white (255) when the draw's unit value is below `density`.
GrayImage generate_pattern(const PatternSpec& spec);

// Binary PGM (P5, maxval 255).
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

class LightController {
 public:
  virtual ~LightController() = default;
  virtual std::string name() const = 0;
  virtual bool reachable() const = 0;
  virtual void apply(LightLevel level) = 0;
  virtual std::optional<LightLevel> level() const = 0;
};

// In-memory controller that records every level it was driven to.
class RecordingLightController final : public LightController {
 public:
  explicit RecordingLightController(std::string name) : name_(std::move(name)) {}

  std::string name() const override { return name_; }
  bool reachable() const override { return reachable_; }
  void apply(LightLevel level) override;
  std::optional<LightLevel> level() const override { return level_; }

  void set_reachable(bool r) noexcept { reachable_ = r; }
  const std::vector<LightLevel>& history() const noexcept { return history_; }

 private:
  std::string name_;
  bool reachable_ = true;
  std::optional<LightLevel> level_;
  std::vector<LightLevel> history_;
};

struct LightAck {
  std::size_t controller = 0;
  std::string name;
  LightLevel level = LightLevel::Off;
  bool changed = false;  // false when the controller already held the level
};

struct LightFailure {
  std::size_t controller = 0;
  std::string name;
  Errc code = Errc::ControllerUnreachable;
};

struct LightReport {
  LightLevel level = LightLevel::Off;
  std::vector<LightAck> acks;
  std::vector<LightFailure> failures;

  bool ok() const noexcept { return failures.empty(); }
};

// Drives every reachable controller to `level`. Unreachable controllers are
// reported individually; the others are still applied.
LightReport set_light_level(LightLevel level, std::span<LightController* const> controllers);

// Projector output device; the mock keeps the last displayed pattern.
class Projector {
 public:
  virtual ~Projector() = default;
  virtual void show(const PatternSpec& pattern) = 0;
};

class RecordingProjector final : public Projector {
 public:
  void show(const PatternSpec& pattern) override { shown_.push_back(pattern); }
  const std::vector<PatternSpec>& shown() const noexcept { return shown_; }

 private:
  std::vector<PatternSpec> shown_;
};

}  // namespace bodyrig::lighting
