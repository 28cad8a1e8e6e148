#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "bodyrig/core/phase.hpp"
#include "bodyrig/lighting/types.hpp"

namespace bodyrig::protocol {

inline constexpr int kVersion = 1;
inline constexpr std::size_t kMaxChunkBytes = 64 * 1024;
inline constexpr std::size_t kMaxBodyBytes = std::size_t{1} << 24;

using lighting::LightLevel;
using lighting::PatternSpec;

// agent -> coordinator, first message on every connection
struct Hello {
  std::string node_id;
  int beam = 0;
  int slot = 0;
  friend bool operator==(const Hello&, const Hello&) = default;
};

struct HelloAck {
  std::string node_id;
  bool accepted = true;
  std::string reason;
  friend bool operator==(const HelloAck&, const HelloAck&) = default;
};

struct Heartbeat {
  std::string node_id;
  std::uint64_t seq = 0;
  friend bool operator==(const Heartbeat&, const Heartbeat&) = default;
};

// Texture captures carry no pattern; pattern captures must name one.
struct CaptureCommand {
  std::string session_id;
  Phase phase = Phase::Texture;
  std::optional<PatternSpec> pattern_ref;
  std::int64_t exposure_deadline_ms = 0;
  friend bool operator==(const CaptureCommand&, const CaptureCommand&) = default;
};

struct LightCommand {
  std::string session_id;
  LightLevel level = LightLevel::Full;
  friend bool operator==(const LightCommand&, const LightCommand&) = default;
};

struct PatternCommand {
  std::string session_id;
  PatternSpec pattern;
  friend bool operator==(const PatternCommand&, const PatternCommand&) = default;
};

// What a CaptureAck acknowledges. Light/Pattern/Capture flow agent ->
// coordinator; Stored flows coordinator -> agent once a frame is verified.
enum class AckStep { Light, Pattern, Capture, Stored };

std::string_view to_string(AckStep s) noexcept;

struct CaptureAck {
  std::string session_id;
  std::string node_id;
  AckStep step = AckStep::Capture;
  std::optional<Phase> phase;  // required for Capture and Stored
  bool ok = true;
  std::string error;  // Errc name when !ok
  friend bool operator==(const CaptureAck&, const CaptureAck&) = default;
};

struct FrameHeader {
  std::string session_id;
  std::string node_id;
  Phase phase = Phase::Texture;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint64_t byte_size = 0;
  std::string sha256;
  std::int64_t captured_at_us = 0;
  std::uint32_t chunk_count = 0;
  friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

struct FrameChunk {
  std::string session_id;
  std::string node_id;
  Phase phase = Phase::Texture;
  std::uint32_t index = 0;
  std::vector<std::uint8_t> data;  // at most kMaxChunkBytes
  friend bool operator==(const FrameChunk&, const FrameChunk&) = default;
};

struct FrameComplete {
  std::string session_id;
  std::string node_id;
  Phase phase = Phase::Texture;
  friend bool operator==(const FrameComplete&, const FrameComplete&) = default;
};

struct FleetCommand {
  std::string job_id;
  std::string command;
  std::int64_t timeout_ms = 0;
  friend bool operator==(const FleetCommand&, const FleetCommand&) = default;
};

struct FleetResult {
  std::string job_id;
  std::string node_id;
  int exit_status = 0;
  std::string output;
  std::int64_t duration_ms = 0;
  friend bool operator==(const FleetResult&, const FleetResult&) = default;
};

struct ErrorReport {
  std::string code;
  std::string detail;
  friend bool operator==(const ErrorReport&, const ErrorReport&) = default;
};

enum class MessageKind {
  Hello,
  HelloAck,
  Heartbeat,
  CaptureCommand,
  LightCommand,
  PatternCommand,
  CaptureAck,
  FrameHeader,
  FrameChunk,
  FrameComplete,
  FleetCommand,
  FleetResult,
  Error,
};

std::string_view to_string(MessageKind k) noexcept;

// Alternative order matches MessageKind.
using Payload = std::variant<Hello, HelloAck, Heartbeat, CaptureCommand, LightCommand,
                             PatternCommand, CaptureAck, FrameHeader, FrameChunk, FrameComplete,
                             FleetCommand, FleetResult, ErrorReport>;

struct Message {
  int version = kVersion;
  Payload payload;

  Message() = default;
  template <typename T>
    requires std::is_constructible_v<Payload, T&&>
  Message(T&& p) : payload(std::forward<T>(p)) {}  // NOLINT(google-explicit-constructor)

  MessageKind kind() const noexcept { return static_cast<MessageKind>(payload.index()); }

  template <typename T>
  const T* get_if() const noexcept {
    return std::get_if<T>(&payload);
  }

  friend bool operator==(const Message&, const Message&) = default;
};

// Throws Error{MalformedBody} naming the first violated type invariant.
void validate(const Message& m);

}  // namespace bodyrig::protocol
