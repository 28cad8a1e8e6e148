#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bodyrig/agent/backend.hpp"
#include "bodyrig/agent/config.hpp"
#include "bodyrig/protocol/message.hpp"

namespace bodyrig::agent {

struct FrameMetadata {
  std::string node_id;
  std::string session_id;
  Phase phase = Phase::Texture;
  std::uint32_t width = 1920;
  std::uint32_t height = 1080;
  std::uint64_t byte_size = 0;
  std::string checksum;  // SHA-256 hex of the image bytes
  Micros captured_at{0};
};

struct Frame {
  FrameMetadata meta;
  Bytes bytes;
};

// Runs one exposure. `now` is when the command was received; the frame is
// stamped with the completion time. Throws Error{BackendFailure} from the
// backend and Error{DeadlineExceeded} when the exposure outlasts the
// command's deadline.
Frame capture_frame(CaptureBackend& backend, const protocol::CaptureCommand& cmd,
                    const std::string& node_id, Micros now);

// FrameHeader, one FrameChunk per 64 KiB, FrameComplete.
std::vector<protocol::Message> frame_messages(const Frame& frame);

// Modeled duration of staging a frame and sending it: SD write, SD read,
// then network serialization at `network_rate` bytes/s.
double stage_and_transfer_seconds(std::uint64_t byte_size, const AgentConfig& cfg, double network_rate);

struct TransferReceipt {
  std::string session_id;
  std::string node_id;
  Phase phase = Phase::Texture;
  std::uint64_t bytes = 0;
  std::string checksum;
  bool verified = false;  // coordinator recomputed the checksum and matched
  int attempts = 0;
  Micros elapsed{0};  // capture completion to coordinator acknowledgement
};

}  // namespace bodyrig::agent
