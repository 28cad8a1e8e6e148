#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bodyrig/agent/backend.hpp"
#include "bodyrig/agent/config.hpp"
#include "bodyrig/agent/frame.hpp"
#include "bodyrig/lighting/lighting.hpp"
#include "bodyrig/protocol/message.hpp"
#include "json.hpp"

namespace bodyrig::agent {

// Everything a NodeAgent needs from the process it runs in: a clock, one
// connection to the coordinator, timers and a log. The simulator and the TCP
// runtime each provide one.
class AgentContext {
 public:
  virtual ~AgentContext() = default;

  virtual Micros now() const = 0;
  // Starts a connection attempt; the runtime answers with
  // NodeAgent::on_connected or NodeAgent::on_connect_failed.
  virtual void connect() = 0;
  virtual void disconnect() = 0;
  virtual void send(const protocol::Message& m) = 0;
  // Bytes handed to send() that have not left the host yet.
  virtual std::size_t send_backlog() const = 0;
  virtual void schedule(Micros delay, std::function<void()> fn) = 0;
  // Time a modeled hardware operation (SD access, exposure) occupies here.
  // The simulator returns `d`; a real host returns zero because the real
  // operation already took its time.
  virtual Micros modeled(Micros d) const = 0;
  virtual void run_command(CommandBackend& backend, std::string command,
                           std::function<void(CommandResult)> done) = 0;
  virtual void log(std::string_view kind, nlohmann::json data) = 0;
};

struct AgentBackends {
  CaptureBackend* capture = nullptr;
  CommandBackend* command = nullptr;
  lighting::Projector* projector = nullptr;  // only on projector hosts
};

// Per-camera client. Sequential state machine: at most one live connection,
// one capture at a time, one frame upload at a time. Capture of the next
// phase overlaps with the upload of the previous frame.
class NodeAgent {
 public:
  enum class Link { Idle, Connecting, Handshaking, Registered, Disconnected };

  // Chunks beyond this many unsent bytes wait for on_writable().
  static constexpr std::size_t kSendWindow = 256 * 1024;

  NodeAgent(AgentConfig cfg, AgentBackends backends, AgentContext& ctx);

  // Connects now, or after one reconnect interval when `delayed` (boot
  // after a restart).
  void start(bool delayed = false);

  void on_connected();
  void on_connect_failed();
  void on_disconnected();
  void on_message(const protocol::Message& m);
  void on_writable();

  // Puts a frame into local storage and queues it for upload. Throws
  // Error{InvalidFrame} for an empty frame.
  void stage(Frame frame);

  Link link() const noexcept { return link_; }
  const AgentConfig& config() const noexcept { return cfg_; }
  std::size_t staged_count() const noexcept { return staging_.size(); }
  const std::vector<TransferReceipt>& receipts() const noexcept { return receipts_; }
  const std::vector<Micros>& reconnect_delays() const noexcept { return reconnect_delays_; }
  std::uint64_t heartbeat_seq() const noexcept { return heartbeat_seq_; }
  std::optional<lighting::LightLevel> light_level() const noexcept { return light_; }

 private:
  using Key = std::pair<std::string, Phase>;

  struct Staged {
    Frame frame;
    enum class State { Writing, Ready, Reading, Sending, AwaitingAck } state = State::Writing;
    int attempts = 0;
    std::uint32_t next_chunk = 0;  // while Sending
  };

  void schedule_reconnect();
  void heartbeat_tick(std::uint64_t generation);
  void handle(const protocol::HelloAck& m);
  void handle(const protocol::CaptureCommand& m);
  void handle(const protocol::LightCommand& m);
  void handle(const protocol::PatternCommand& m);
  void handle(const protocol::CaptureAck& m);
  void handle(const protocol::FleetCommand& m);
  void finish_capture(const protocol::CaptureCommand& cmd, std::optional<Frame> frame, std::string error);
  void evict_other_sessions(const std::string& session_id);
  void pump();
  void continue_sending();
  void reset_uploads();

  AgentConfig cfg_;
  AgentBackends backends_;
  AgentContext& ctx_;
  SplitMix64 rng_;

  Link link_ = Link::Idle;
  std::uint64_t generation_ = 0;  // bumps on every connect/disconnect
  std::uint64_t reconnect_attempt_ = 0;
  std::uint64_t heartbeat_seq_ = 0;
  std::vector<Micros> reconnect_delays_;

  std::optional<lighting::LightLevel> light_;
  bool capturing_ = false;
  std::deque<protocol::CaptureCommand> capture_queue_;

  std::map<Key, Staged> staging_;
  std::deque<Key> upload_order_;
  std::optional<Key> uploading_;
  std::vector<TransferReceipt> receipts_;
};

}  // namespace bodyrig::agent
