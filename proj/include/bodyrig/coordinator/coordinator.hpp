#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bodyrig/coordinator/capture_store.hpp"
#include "bodyrig/coordinator/registry.hpp"
#include "bodyrig/coordinator/session.hpp"
#include "bodyrig/core/digest.hpp"
#include "bodyrig/core/event_log.hpp"
#include "bodyrig/fleet/fleet.hpp"
#include "bodyrig/lighting/lighting.hpp"
#include "bodyrig/protocol/message.hpp"

namespace bodyrig::coordinator {

using ConnId = std::uint64_t;

// What the coordinator needs from its host: a clock, per-connection send
// and close, and timers. All callbacks into Coordinator happen on one
// logical thread.
class CoordinatorContext {
 public:
  virtual ~CoordinatorContext() = default;
  virtual Micros now() const = 0;
  virtual void send(ConnId conn, const protocol::Message& m) = 0;
  virtual void close(ConnId conn) = 0;
  virtual void schedule(Micros delay, std::function<void()> fn) = 0;
};

struct CoordinatorConfig {
  int beams = 24;
  int slots_per_beam = 4;
  Micros heartbeat_period{1'000'000};
  int missed_heartbeats = 3;  // silence for this many periods marks a node Lost
  Micros liveness_check{250'000};
  SessionDeadlines deadlines;
  std::int64_t exposure_deadline_ms = 1000;
  lighting::PatternSpec default_pattern = lighting::PatternSpec::dots(1, 0.5, 1920, 1080);
  std::filesystem::path store_root = "captures";
};

struct SessionRequest {
  std::optional<lighting::PatternSpec> pattern;  // default pattern when absent
  lighting::LightLevel light = lighting::LightLevel::Full;
};

struct SessionReport {
  std::string session_id;
  SessionState state = SessionState::Idle;
  std::size_t expected_nodes = 0;
  std::size_t received_texture = 0;
  std::size_t received_pattern = 0;
  std::uint64_t total_bytes = 0;
  Micros started_at{0};
  std::optional<Micros> capture_started_at;  // texture fan-out
  std::optional<Micros> last_frame_at;
  std::optional<Micros> finished_at;
  std::set<FrameKey> missing;
  lighting::PatternSpec pattern;
  lighting::LightLevel light = lighting::LightLevel::Full;
  std::string manifest;  // path once finalized

  std::size_t frames() const noexcept { return received_texture + received_pattern; }
  // Last frame received minus texture fan-out, in seconds.
  std::optional<double> transfer_seconds() const;
  nlohmann::json to_json() const;
};

class Coordinator {
 public:
  Coordinator(CoordinatorConfig cfg, CoordinatorContext& ctx, EventLog& log,
              std::vector<lighting::LightController*> lights = {});

  // Starts the liveness sweep.
  void start();

  // Transport side.
  void on_open(ConnId conn);
  void on_message(ConnId conn, const protocol::Message& m);
  void on_closed(ConnId conn);

  // Operator side. Errors are typed (core/error.hpp).
  nlohmann::json nodes_json() const;
  // Error{SessionActive} while a session or fleet job is running.
  std::string start_session(const SessionRequest& req);
  SessionReport session_report(const std::string& session_id) const;  // Error{NotFound}
  nlohmann::json session_json(const std::string& session_id) const;
  lighting::LightReport set_lights(lighting::LightLevel level);
  // Shows `p` on every connected node's projector and makes it the default
  // pattern of later sessions.
  void set_pattern(const lighting::PatternSpec& p);
  // Error{SessionActive}, Error{EmptySelection}, Error{InvalidArgument}.
  std::string start_fleet(fleet::FleetJob job);
  fleet::FleetReport fleet_report(const std::string& job_id) const;  // Error{NotFound}

  bool busy() const noexcept;
  std::optional<std::string> active_session() const;
  const CaptureSession* session(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  std::vector<std::string> job_ids() const;
  const Registry& registry() const noexcept { return registry_; }
  const CaptureStore& store() const noexcept { return store_; }
  const CoordinatorConfig& config() const noexcept { return cfg_; }
  const lighting::PatternSpec& default_pattern() const noexcept { return cfg_.default_pattern; }

 private:
  struct Partial {
    protocol::FrameHeader header;
    Bytes bytes;
    std::uint32_t next = 0;
  };
  struct Conn {
    std::optional<std::string> node_id;
    std::map<std::pair<std::string, Phase>, Partial> partial;
  };
  struct SessionEntry {
    CaptureSession fsm;
    SessionReport report;
  };

  void log(std::string kind, nlohmann::json data);
  void handle_hello(ConnId conn, const protocol::Hello& h);
  void handle_ack(const std::string& node, const protocol::CaptureAck& a);
  void handle_header(ConnId conn, Conn& c, const protocol::FrameHeader& h);
  void handle_chunk(ConnId conn, Conn& c, const protocol::FrameChunk& ch);
  void handle_complete(ConnId conn, Conn& c, const protocol::FrameComplete& f);
  void handle_fleet_result(const std::string& node, const protocol::FleetResult& r);
  void reject_frame(ConnId conn, const std::string& session_id, const std::string& node, Phase phase, Errc code);

  void step(const std::string& session_id, const SessionEvent& e);
  void apply(SessionEntry& s, SessionState before, StepResult r);
  void node_lost(const std::string& node, const std::string& reason);
  void liveness_tick();
  void fleet_pump();
  void fleet_finish_exec(const std::string& node, const char* status);

  CoordinatorConfig cfg_;
  CoordinatorContext& ctx_;
  EventLog& log_;
  std::vector<lighting::LightController*> lights_;
  Registry registry_;
  CaptureStore store_;

  std::map<ConnId, Conn> conns_;
  std::map<std::string, ConnId> node_conn_;

  std::map<std::string, SessionEntry> sessions_;
  std::optional<std::string> active_;
  std::uint64_t session_counter_ = 0;

  std::map<std::string, fleet::FleetRun> jobs_;
  std::optional<std::string> active_job_;
  std::uint64_t job_counter_ = 0;
  std::map<std::string, std::uint64_t> exec_token_;  // node -> token of its running execution
  std::uint64_t exec_counter_ = 0;
};

}  // namespace bodyrig::coordinator
