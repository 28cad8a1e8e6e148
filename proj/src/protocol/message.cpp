#include "bodyrig/protocol/message.hpp"

#include "bodyrig/core/error.hpp"

namespace bodyrig::protocol {
namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::MalformedBody, what); }

void require_id(const std::string& id, const char* what) {
  if (id.empty()) invalid(std::string(what) + " must not be empty");
}

struct Validator {
  void operator()(const Hello& m) const {
    require_id(m.node_id, "Hello.node_id");
    if (m.beam < 0 || m.slot < 0) invalid("Hello.beam/slot must be non-negative");
  }
  void operator()(const HelloAck& m) const { require_id(m.node_id, "HelloAck.node_id"); }
  void operator()(const Heartbeat& m) const { require_id(m.node_id, "Heartbeat.node_id"); }
  void operator()(const CaptureCommand& m) const {
    require_id(m.session_id, "CaptureCommand.session_id");
    if (m.phase == Phase::Texture && m.pattern_ref) invalid("texture capture must not carry a pattern");
    if (m.phase == Phase::Pattern) {
      if (!m.pattern_ref) invalid("pattern capture requires pattern_ref");
      if (!m.pattern_ref->valid()) invalid("pattern_ref invalid");
    }
    if (m.exposure_deadline_ms <= 0) invalid("exposure_deadline_ms must be positive");
  }
  void operator()(const LightCommand&) const {}
  void operator()(const PatternCommand& m) const {
    if (!m.pattern.valid()) invalid("PatternCommand.pattern invalid");
  }
  void operator()(const CaptureAck& m) const {
    require_id(m.node_id, "CaptureAck.node_id");
    if ((m.step == AckStep::Capture || m.step == AckStep::Stored) && !m.phase) {
      invalid("CaptureAck for capture/stored requires phase");
    }
    if (m.ok && !m.error.empty()) invalid("successful CaptureAck carries an error");
  }
  void operator()(const FrameHeader& m) const {
    require_id(m.session_id, "FrameHeader.session_id");
    require_id(m.node_id, "FrameHeader.node_id");
    if (std::uint64_t{m.width} * m.height == 0) invalid("FrameHeader resolution is zero");
    if (m.byte_size == 0) invalid("FrameHeader.byte_size is zero");
    if (m.sha256.size() != 64) invalid("FrameHeader.sha256 must be 64 hex digits");
    const std::uint64_t needed = (m.byte_size + kMaxChunkBytes - 1) / kMaxChunkBytes;
    if (m.chunk_count != needed) invalid("FrameHeader.chunk_count inconsistent with byte_size");
  }
  void operator()(const FrameChunk& m) const {
    require_id(m.node_id, "FrameChunk.node_id");
    if (m.data.empty() || m.data.size() > kMaxChunkBytes) invalid("FrameChunk.data size out of (0, 64 KiB]");
  }
  void operator()(const FrameComplete& m) const { require_id(m.node_id, "FrameComplete.node_id"); }
  void operator()(const FleetCommand& m) const {
    require_id(m.job_id, "FleetCommand.job_id");
    if (m.timeout_ms <= 0) invalid("FleetCommand.timeout_ms must be positive");
  }
  void operator()(const FleetResult& m) const {
    require_id(m.job_id, "FleetResult.job_id");
    require_id(m.node_id, "FleetResult.node_id");
    if (m.duration_ms < 0) invalid("FleetResult.duration_ms negative");
  }
  void operator()(const ErrorReport& m) const { require_id(m.code, "Error.code"); }
};

}  // namespace

std::string_view to_string(AckStep s) noexcept {
  switch (s) {
    case AckStep::Light: return "light";
    case AckStep::Pattern: return "pattern";
    case AckStep::Capture: return "capture";
    case AckStep::Stored: return "stored";
  }
  return "?";
}

std::string_view to_string(MessageKind k) noexcept {
  switch (k) {
    case MessageKind::Hello: return "Hello";
    case MessageKind::HelloAck: return "HelloAck";
    case MessageKind::Heartbeat: return "Heartbeat";
    case MessageKind::CaptureCommand: return "CaptureCommand";
    case MessageKind::LightCommand: return "LightCommand";
    case MessageKind::PatternCommand: return "PatternCommand";
    case MessageKind::CaptureAck: return "CaptureAck";
    case MessageKind::FrameHeader: return "FrameHeader";
    case MessageKind::FrameChunk: return "FrameChunk";
    case MessageKind::FrameComplete: return "FrameComplete";
    case MessageKind::FleetCommand: return "FleetCommand";
    case MessageKind::FleetResult: return "FleetResult";
    case MessageKind::Error: return "Error";
  }
  return "?";
}

void validate(const Message& m) {
  if (m.version != kVersion) throw Error(Errc::UnsupportedVersion, "version " + std::to_string(m.version));
  std::visit(Validator{}, m.payload);
}

}  // namespace bodyrig::protocol
