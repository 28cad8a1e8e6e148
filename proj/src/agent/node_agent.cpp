#include "bodyrig/agent/node_agent.hpp"

#include <algorithm>

#include "bodyrig/core/error.hpp"

namespace bodyrig::agent {

using protocol::AckStep;
using protocol::CaptureAck;
using protocol::Message;

namespace {

Micros seconds_for(std::uint64_t bytes, double rate) {
  return ceil_seconds(static_cast<double>(bytes) / rate);
}

}  // namespace

NodeAgent::NodeAgent(AgentConfig cfg, AgentBackends backends, AgentContext& ctx)
    : cfg_(std::move(cfg)), backends_(backends), ctx_(ctx), rng_(cfg_.rng_seed) {
  cfg_.validate();
  if (backends_.capture == nullptr || backends_.command == nullptr) {
    throw Error(Errc::InvalidArgument, "agent needs capture and command backends");
  }
}

void NodeAgent::start(bool delayed) {
  if (delayed) {
    link_ = Link::Disconnected;
    schedule_reconnect();
    return;
  }
  link_ = Link::Connecting;
  ctx_.connect();
}

void NodeAgent::schedule_reconnect() {
  const Micros d = next_reconnect_delay(reconnect_attempt_++, cfg_, rng_);
  reconnect_delays_.push_back(d);
  ctx_.log("reconnect_scheduled", {{"delay_us", d.count()}, {"attempt", reconnect_attempt_ - 1}});
  const std::uint64_t gen = generation_;
  ctx_.schedule(d, [this, gen] {
    if (gen != generation_ || link_ != Link::Disconnected) return;
    link_ = Link::Connecting;
    ctx_.connect();
  });
}

void NodeAgent::on_connected() {
  ++generation_;
  link_ = Link::Handshaking;
  ctx_.send(protocol::Hello{cfg_.node_id, cfg_.beam, cfg_.slot});
}

void NodeAgent::on_connect_failed() {
  link_ = Link::Disconnected;
  schedule_reconnect();
}

void NodeAgent::on_disconnected() {
  if (link_ == Link::Disconnected) return;
  ++generation_;
  link_ = Link::Disconnected;
  reset_uploads();
  ctx_.log("disconnected", {{"staged", staging_.size()}});
  schedule_reconnect();
}

void NodeAgent::reset_uploads() {
  for (auto& [key, s] : staging_) {
    if (s.state != Staged::State::Writing) s.state = Staged::State::Ready;
  }
  uploading_.reset();
}

void NodeAgent::on_message(const Message& m) {
  std::visit(
      [this](const auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, protocol::HelloAck> || std::is_same_v<T, protocol::CaptureCommand> ||
                      std::is_same_v<T, protocol::LightCommand> || std::is_same_v<T, protocol::PatternCommand> ||
                      std::is_same_v<T, protocol::CaptureAck> || std::is_same_v<T, protocol::FleetCommand>) {
          handle(payload);
        } else if constexpr (std::is_same_v<T, protocol::ErrorReport>) {
          ctx_.log("coordinator_error", {{"code", payload.code}, {"detail", payload.detail}});
        } else {
          ctx_.log("unexpected_message", {{"kind", protocol::to_string(protocol::Message(payload).kind())}});
        }
      },
      m.payload);
}

void NodeAgent::handle(const protocol::HelloAck& m) {
  if (link_ != Link::Handshaking) return;
  if (!m.accepted) {
    ctx_.log("registration_rejected", {{"reason", m.reason}});
    ctx_.disconnect();
    ++generation_;
    link_ = Link::Disconnected;
    schedule_reconnect();
    return;
  }
  link_ = Link::Registered;
  reconnect_attempt_ = 0;
  ctx_.log("registered", {{"staged", staging_.size()}});
  heartbeat_tick(generation_);
  pump();
}

void NodeAgent::heartbeat_tick(std::uint64_t generation) {
  if (generation != generation_ || link_ != Link::Registered) return;
  ctx_.send(protocol::Heartbeat{cfg_.node_id, heartbeat_seq_++});
  ctx_.schedule(cfg_.heartbeat_period, [this, generation] { heartbeat_tick(generation); });
}

void NodeAgent::handle(const protocol::LightCommand& m) {
  light_ = m.level;
  ctx_.send(CaptureAck{m.session_id, cfg_.node_id, AckStep::Light, std::nullopt, true, {}});
}

void NodeAgent::handle(const protocol::PatternCommand& m) {
  if (backends_.projector != nullptr) backends_.projector->show(m.pattern);
  ctx_.send(CaptureAck{m.session_id, cfg_.node_id, AckStep::Pattern, std::nullopt, true, {}});
}

void NodeAgent::handle(const protocol::CaptureCommand& m) {
  ctx_.log("capture_command", {{"session_id", m.session_id}, {"phase", to_string(m.phase)}});
  if (capturing_) {
    capture_queue_.push_back(m);
    return;
  }
  capturing_ = true;
  evict_other_sessions(m.session_id);
  if (m.phase == Phase::Texture && backends_.projector != nullptr) {
    backends_.projector->show(lighting::PatternSpec::black(1920, 1080));
  }
  const Micros received = ctx_.now();
  try {
    Frame f = capture_frame(*backends_.capture, m, cfg_.node_id, received);
    const Micros wait = ctx_.modeled(f.meta.captured_at - received);
    ctx_.schedule(wait, [this, m, f = std::move(f)]() mutable { finish_capture(m, std::move(f), {}); });
  } catch (const Error& e) {
    ctx_.log("capture_failed", {{"session_id", m.session_id}, {"phase", to_string(m.phase)}, {"error", to_string(e.code())}});
    ctx_.schedule(Micros{0}, [this, m, code = std::string(to_string(e.code()))] { finish_capture(m, std::nullopt, code); });
  }
}

void NodeAgent::finish_capture(const protocol::CaptureCommand& cmd, std::optional<Frame> frame, std::string error) {
  capturing_ = false;
  const bool ok = frame.has_value();
  ctx_.send(CaptureAck{cmd.session_id, cfg_.node_id, AckStep::Capture, cmd.phase, ok, ok ? std::string() : error});
  if (frame) {
    ctx_.log("captured", {{"session_id", cmd.session_id},
                          {"phase", to_string(cmd.phase)},
                          {"bytes", frame->meta.byte_size},
                          {"sha256", frame->meta.checksum}});
    stage(std::move(*frame));
  }
  if (!capture_queue_.empty()) {
    protocol::CaptureCommand next = std::move(capture_queue_.front());
    capture_queue_.pop_front();
    handle(next);
  }
}

void NodeAgent::evict_other_sessions(const std::string& session_id) {
  for (auto it = staging_.begin(); it != staging_.end();) {
    if (it->first.first != session_id && (!uploading_ || *uploading_ != it->first)) {
      ctx_.log("staging_evicted", {{"session_id", it->first.first}, {"phase", to_string(it->first.second)}});
      std::erase(upload_order_, it->first);
      it = staging_.erase(it);
    } else {
      ++it;
    }
  }
}

void NodeAgent::stage(Frame frame) {
  if (frame.bytes.empty() || frame.meta.byte_size == 0 || frame.meta.byte_size != frame.bytes.size()) {
    throw Error(Errc::InvalidFrame, "frame has no bytes or a size mismatch");
  }
  Key key{frame.meta.session_id, frame.meta.phase};
  if (uploading_ && *uploading_ == key) return;  // already on its way
  std::erase(upload_order_, key);
  const Micros write_time = ctx_.modeled(seconds_for(frame.meta.byte_size, cfg_.staging_write_rate));
  staging_[key] = Staged{std::move(frame), Staged::State::Writing, 0, 0};
  upload_order_.push_back(key);
  ctx_.schedule(write_time, [this, key] {
    auto it = staging_.find(key);
    if (it == staging_.end() || it->second.state != Staged::State::Writing) return;
    it->second.state = Staged::State::Ready;
    pump();
  });
}

void NodeAgent::pump() {
  if (uploading_ || link_ != Link::Registered) return;
  for (const Key& key : upload_order_) {
    Staged& s = staging_.at(key);
    if (s.state != Staged::State::Ready) continue;
    s.state = Staged::State::Reading;
    uploading_ = key;
    const std::uint64_t gen = generation_;
    ctx_.schedule(ctx_.modeled(seconds_for(s.frame.meta.byte_size, cfg_.staging_read_rate)), [this, key, gen] {
      if (gen != generation_ || !uploading_ || *uploading_ != key) return;
      Staged& st = staging_.at(key);
      st.state = Staged::State::Sending;
      st.next_chunk = 0;
      ++st.attempts;
      const auto& m = st.frame.meta;
      const auto chunks =
          static_cast<std::uint32_t>((m.byte_size + protocol::kMaxChunkBytes - 1) / protocol::kMaxChunkBytes);
      ctx_.send(protocol::FrameHeader{m.session_id, m.node_id, m.phase, m.width, m.height, m.byte_size, m.checksum,
                                      m.captured_at.count(), chunks});
      continue_sending();
    });
    return;
  }
}

void NodeAgent::on_writable() { continue_sending(); }

void NodeAgent::continue_sending() {
  if (!uploading_ || link_ != Link::Registered) return;
  Staged& s = staging_.at(*uploading_);
  if (s.state != Staged::State::Sending) return;
  const auto& m = s.frame.meta;
  const std::size_t size = s.frame.bytes.size();
  const auto chunks = static_cast<std::uint32_t>((size + protocol::kMaxChunkBytes - 1) / protocol::kMaxChunkBytes);
  while (s.next_chunk < chunks && ctx_.send_backlog() < kSendWindow) {
    const std::size_t begin = std::size_t{s.next_chunk} * protocol::kMaxChunkBytes;
    const std::size_t end = std::min(size, begin + protocol::kMaxChunkBytes);
    protocol::FrameChunk c{m.session_id, m.node_id, m.phase, s.next_chunk,
                           Bytes(s.frame.bytes.begin() + static_cast<std::ptrdiff_t>(begin),
                                 s.frame.bytes.begin() + static_cast<std::ptrdiff_t>(end))};
    ++s.next_chunk;
    const std::uint64_t gen = generation_;
    ctx_.send(c);
    if (gen != generation_) return;  // send() reported a disconnect
  }
  if (s.next_chunk == chunks) {
    s.state = Staged::State::AwaitingAck;
    ctx_.send(protocol::FrameComplete{m.session_id, m.node_id, m.phase});
  }
}

void NodeAgent::handle(const protocol::CaptureAck& m) {
  if (m.step != AckStep::Stored || !m.phase) return;
  const Key key{m.session_id, *m.phase};
  auto it = staging_.find(key);
  if (it == staging_.end() || it->second.state != Staged::State::AwaitingAck) return;
  Staged& s = it->second;
  auto finish = [&] {
    std::erase(upload_order_, key);
    staging_.erase(it);
    uploading_.reset();
    pump();
  };
  if (m.ok) {
    receipts_.push_back({m.session_id, cfg_.node_id, *m.phase, s.frame.meta.byte_size, s.frame.meta.checksum, true,
                         s.attempts, ctx_.now() - s.frame.meta.captured_at});
    ctx_.log("frame_delivered",
             {{"session_id", m.session_id}, {"phase", to_string(*m.phase)}, {"attempts", s.attempts}});
    finish();
  } else if (m.error == to_string(Errc::ChecksumMismatch) && s.attempts < 2) {
    ctx_.log("frame_retry", {{"session_id", m.session_id}, {"phase", to_string(*m.phase)}});
    s.state = Staged::State::Ready;
    uploading_.reset();
    pump();
  } else {
    ctx_.log("frame_rejected",
             {{"session_id", m.session_id}, {"phase", to_string(*m.phase)}, {"error", m.error}});
    ctx_.send(protocol::ErrorReport{m.error.empty() ? std::string("InvalidFrame") : m.error,
                                    "gave up on " + m.session_id + "/" + std::string(to_string(*m.phase)) +
                                        " after " + std::to_string(s.attempts) + " attempt(s)"});
    finish();
  }
}

void NodeAgent::handle(const protocol::FleetCommand& m) {
  ctx_.log("fleet_exec", {{"job_id", m.job_id}, {"command", m.command}});
  ctx_.run_command(*backends_.command, m.command, [this, job = m.job_id](CommandResult r) {
    ctx_.send(protocol::FleetResult{job, cfg_.node_id, r.exit_status, r.output, r.duration.count() / 1000});
  });
}

}  // namespace bodyrig::agent
