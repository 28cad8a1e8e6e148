#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bodyrig/agent/node_agent.hpp"
#include "bodyrig/coordinator/coordinator.hpp"
#include "bodyrig/core/event_log.hpp"
#include "bodyrig/sim/event_queue.hpp"
#include "bodyrig/sim/network.hpp"
#include "json.hpp"

namespace bodyrig::sim {

enum class FaultKind { Crash, Disconnect, Restart };
std::string_view to_string(FaultKind k) noexcept;
FaultKind fault_kind_from_string(std::string_view s);  // Error{InvalidArgument}

struct Fault {
  Micros at{0};
  std::string node_id;
  FaultKind kind = FaultKind::Crash;
  friend bool operator==(const Fault&, const Fault&) = default;
};

struct ClusterSpec {
  std::size_t node_count = 96;
  int beams = 24;
  int slots_per_beam = 4;
  Micros link_latency{1'000};
  double link_bandwidth = 12.5e6;  // 100 Mbit/s camera-node Ethernet
  double server_nic_bandwidth = 125e6;
  std::uint64_t seed = 42;
  std::vector<Fault> fault_plan;
  // Extensions: camera and staging model.
  std::uint32_t frame_width = 1000;
  std::uint32_t frame_height = 666;  // PPM of ~2.0 MB, the rig's image size
  Micros exposure{50'000};
  double staging_read_rate = 20e6;
  double staging_write_rate = 10e6;
  Micros heartbeat_period{1'000'000};
  Micros reconnect_base{2'000'000};
  double jitter_fraction = 0.1;
  Micros time_cap{600'000'000};

  void validate() const;  // Error{InvalidArgument}
  std::vector<std::string> node_ids() const;
  nlohmann::json to_json() const;
  static ClusterSpec from_json(const nlohmann::json& j);
};

// Fault plan with one more entry. Throws Error{UnknownNode} for a node
// outside the spec and Error{InvalidArgument} for a negative time.
std::vector<Fault> inject_fault(const ClusterSpec& spec, Micros at, const std::string& node_id, FaultKind kind);

// One timed operator action.
struct Action {
  enum class Kind { Capture, Lights, Pattern, Fleet, Wait } kind = Kind::Capture;
  Micros at{0};
  std::optional<lighting::PatternSpec> pattern;
  lighting::LightLevel light = lighting::LightLevel::Full;
  std::string command;
  std::string targets = "all";
  std::size_t limit = fleet::kDefaultConcurrency;
  Micros timeout{30'000'000};
};

using Scenario = std::vector<Action>;
Scenario scenario_from_json(const nlohmann::json& j);  // Error{InvalidArgument}

struct SimReport {
  double virtual_duration = 0;  // seconds
  std::vector<coordinator::SessionReport> sessions;
  std::vector<fleet::FleetReport> fleet_jobs;
  std::map<std::string, std::uint64_t> delivered;  // frames per node
  std::map<std::string, std::vector<Micros>> reconnect_delays;
  std::vector<LogEvent> events;

  nlohmann::json to_json() const;
};

// A coordinator and node_count agents on one virtual clock. The production
// state machines run unchanged; clock, network and hardware are simulated.
class SimCluster {
 public:
  SimCluster(ClusterSpec spec, std::filesystem::path store_root);
  ~SimCluster();
  SimCluster(const SimCluster&) = delete;
  SimCluster& operator=(const SimCluster&) = delete;

  // Boots the coordinator and all agents and schedules the fault plan.
  void start();

  Micros now() const noexcept { return q_.now(); }
  // Runs until `done` holds (checked after every event) or virtual time
  // passes `deadline`. Returns whether `done` held.
  bool run_until(const std::function<bool()>& done, Micros deadline);
  void run_for(Micros d);
  // Runs until every live node with an intact link is registered.
  bool settle(Micros max_wait = Micros{10'000'000});

  // Applies a fault now.
  void apply_fault(const std::string& node_id, FaultKind kind);

  coordinator::Coordinator& coordinator() noexcept { return *coord_; }
  EventLog& log() noexcept { return log_; }
  const ClusterSpec& spec() const noexcept { return spec_; }
  const agent::NodeAgent* agent(const std::string& node_id) const;
  std::vector<Micros> reconnect_delays(const std::string& node_id) const;
  bool crashed(const std::string& node_id) const;

  SimReport report() const;

 private:
  struct Node;
  class AgentCtx;
  class CoordCtx;

  Node& node(const std::string& id);
  void boot_agent(Node& n, bool delayed);
  void agent_connect(Node& n);
  void agent_close(Node& n);
  void coord_send(coordinator::ConnId conn, const protocol::Message& m);
  void coord_close(coordinator::ConnId conn);
  void drop_connection(Node& n);
  void uplink(Node& n, const protocol::Message& m);

  ClusterSpec spec_;
  EventQueue q_;
  EventLog log_;
  FluidPool ingress_;
  FluidPool egress_;
  std::unique_ptr<CoordCtx> coord_ctx_;
  std::unique_ptr<coordinator::Coordinator> coord_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<std::string, std::size_t> index_;
  std::map<coordinator::ConnId, std::size_t> conn_node_;
  coordinator::ConnId next_conn_ = 1;
  std::vector<std::unique_ptr<lighting::RecordingLightController>> lights_;
};

// Runs `scenario` to completion on a fresh cluster. Actions start at
// max(at, completion of the previous action). Throws
// Error{VirtualTimeExhausted} when the cluster does not finish before
// spec.time_cap.
SimReport run_cluster(const ClusterSpec& spec, const Scenario& scenario, const std::filesystem::path& store_root);

}  // namespace bodyrig::sim
