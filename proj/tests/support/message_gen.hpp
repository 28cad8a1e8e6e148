#pragma once

// Random well-formed protocol messages for property tests.

#include <cstdint>
#include <random>
#include <string>

#include "bodyrig/protocol/message.hpp"

namespace bodyrig::testing {

class MessageGen {
 public:
  explicit MessageGen(std::uint64_t seed) : rng_(seed) {}

  protocol::Message next() {
    using namespace protocol;
    switch (pick(0, 12)) {
      case 0: return Hello{id(), pick(0, 23), pick(0, 3)};
      case 1: return HelloAck{id(), coin(), coin() ? text(20) : ""};
      case 2: return Heartbeat{id(), u64()};
      case 3: {
        CaptureCommand c{id(), coin() ? Phase::Texture : Phase::Pattern, {}, pick(1, 60000)};
        if (c.phase == Phase::Pattern) c.pattern_ref = dots();
        return c;
      }
      case 4: {
        static constexpr lighting::LightLevel kLevels[] = {lighting::LightLevel::Off,
                                                            lighting::LightLevel::Half,
                                                            lighting::LightLevel::Full};
        return LightCommand{text(8), kLevels[pick(0, 2)]};
      }
      case 5: return PatternCommand{text(8), coin() ? dots() : PatternSpec::black(pick(1, 4000), pick(1, 4000))};
      case 6: {
        CaptureAck a;
        a.session_id = text(8);
        a.node_id = id();
        a.step = static_cast<AckStep>(pick(0, 3));
        if (a.step == AckStep::Capture || a.step == AckStep::Stored || coin()) a.phase = phase();
        a.ok = coin();
        if (!a.ok) a.error = "BackendFailure";
        return a;
      }
      case 7: {
        FrameHeader h;
        h.session_id = id();
        h.node_id = id();
        h.phase = phase();
        h.width = static_cast<std::uint32_t>(pick(1, 4096));
        h.height = static_cast<std::uint32_t>(pick(1, 4096));
        h.byte_size = static_cast<std::uint64_t>(pick(1, 50'000'000));
        h.sha256 = hex64();
        h.captured_at_us = pick(0, 1'000'000'000);
        h.chunk_count = static_cast<std::uint32_t>((h.byte_size + kMaxChunkBytes - 1) / kMaxChunkBytes);
        return h;
      }
      case 8: {
        FrameChunk c{id(), id(), phase(), static_cast<std::uint32_t>(pick(0, 1000)), {}};
        c.data.resize(static_cast<std::size_t>(pick(1, coin() ? 64 : 65536)));
        for (auto& b : c.data) b = static_cast<std::uint8_t>(rng_());
        return c;
      }
      case 9: return FrameComplete{id(), id(), phase()};
      case 10: return FleetCommand{id(), text(40), pick(1, 100000)};
      case 11: return FleetResult{id(), id(), pick(-1, 255), text(60), pick(0, 100000)};
      default: return ErrorReport{"MalformedBody", text(30)};
    }
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return pick(0, 1) == 1; }
  std::uint64_t u64() { return rng_(); }
  Phase phase() { return coin() ? Phase::Texture : Phase::Pattern; }

  std::string text(int max_len) {
    // Printable ASCII plus a few multi-byte UTF-8 sequences and escapes.
    static const char* kPieces[] = {"a", "Z", "0", " ", "\"", "\\", "/", "\n", "\t", "\xC3\xA9", "\xE2\x82\xAC", "{", "}"};
    std::string s;
    const int n = pick(0, max_len);
    for (int i = 0; i < n; ++i) s += kPieces[pick(0, 12)];
    return s;
  }

  std::string id() { return "n" + std::to_string(pick(0, 999)); }

  std::string hex64() {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s(64, '0');
    for (auto& c : s) c = kDigits[pick(0, 15)];
    return s;
  }

  protocol::PatternSpec dots() {
    return protocol::PatternSpec::dots(u64(), std::uniform_real_distribution<double>(1e-6, 0.999999)(rng_),
                                       static_cast<std::uint32_t>(pick(1, 4096)),
                                       static_cast<std::uint32_t>(pick(1, 4096)));
  }

  std::mt19937_64 rng_;
};

}  // namespace bodyrig::testing
