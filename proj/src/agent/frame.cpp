#include "bodyrig/agent/frame.hpp"

#include <algorithm>

#include "bodyrig/core/error.hpp"

namespace bodyrig::agent {

Frame capture_frame(CaptureBackend& backend, const protocol::CaptureCommand& cmd,
                    const std::string& node_id, Micros now) {
  CaptureRequest req{cmd.session_id, node_id, cmd.phase, std::nullopt};
  if (cmd.pattern_ref) req.pattern_seed = cmd.pattern_ref->seed;
  CapturedImage img = backend.capture(req);
  if (img.duration > Micros{cmd.exposure_deadline_ms * 1000}) {
    throw Error(Errc::DeadlineExceeded, "exposure took " + std::to_string(img.duration.count()) + " us");
  }
  Frame f;
  f.meta.node_id = node_id;
  f.meta.session_id = cmd.session_id;
  f.meta.phase = cmd.phase;
  f.meta.width = img.width;
  f.meta.height = img.height;
  f.meta.byte_size = img.bytes.size();
  f.meta.checksum = sha256_hex(img.bytes);
  f.meta.captured_at = now + img.duration;
  f.bytes = std::move(img.bytes);
  return f;
}

std::vector<protocol::Message> frame_messages(const Frame& frame) {
  const auto& m = frame.meta;
  const std::size_t chunks = (frame.bytes.size() + protocol::kMaxChunkBytes - 1) / protocol::kMaxChunkBytes;
  std::vector<protocol::Message> out;
  out.reserve(chunks + 2);
  out.emplace_back(protocol::FrameHeader{m.session_id, m.node_id, m.phase, m.width, m.height, m.byte_size,
                                         m.checksum, m.captured_at.count(), static_cast<std::uint32_t>(chunks)});
  for (std::size_t i = 0; i < chunks; ++i) {
    const std::size_t begin = i * protocol::kMaxChunkBytes;
    const std::size_t end = std::min(frame.bytes.size(), begin + protocol::kMaxChunkBytes);
    out.emplace_back(protocol::FrameChunk{m.session_id, m.node_id, m.phase, static_cast<std::uint32_t>(i),
                                          Bytes(frame.bytes.begin() + static_cast<std::ptrdiff_t>(begin),
                                                frame.bytes.begin() + static_cast<std::ptrdiff_t>(end))});
  }
  out.emplace_back(protocol::FrameComplete{m.session_id, m.node_id, m.phase});
  return out;
}

double stage_and_transfer_seconds(std::uint64_t byte_size, const AgentConfig& cfg, double network_rate) {
  if (byte_size == 0) throw Error(Errc::InvalidFrame, "empty frame");
  if (!(network_rate > 0.0)) throw Error(Errc::InvalidArgument, "network rate must be positive");
  const auto b = static_cast<double>(byte_size);
  return b / cfg.staging_write_rate + b / cfg.staging_read_rate + b / network_rate;
}

}  // namespace bodyrig::agent
