#include "bodyrig/sim/cluster.hpp"

#include <algorithm>
#include <cstdio>

#include "bodyrig/core/error.hpp"
#include "bodyrig/core/splitmix.hpp"
#include "bodyrig/protocol/codec.hpp"

namespace bodyrig::sim {

using coordinator::ConnId;
using protocol::Message;

std::string_view to_string(FaultKind k) noexcept {
  switch (k) {
    case FaultKind::Crash:
      return "Crash";
    case FaultKind::Disconnect:
      return "Disconnect";
    case FaultKind::Restart:
      return "Restart";
  }
  return "?";
}

FaultKind fault_kind_from_string(std::string_view s) {
  if (s == "Crash") return FaultKind::Crash;
  if (s == "Disconnect") return FaultKind::Disconnect;
  if (s == "Restart") return FaultKind::Restart;
  throw Error(Errc::InvalidArgument, "unknown fault kind: " + std::string(s));
}

void ClusterSpec::validate() const {
  if (node_count < 1) throw Error(Errc::InvalidArgument, "node_count must be at least 1");
  if (beams < 1 || slots_per_beam < 1) throw Error(Errc::InvalidArgument, "rig needs beams and slots");
  if (node_count > static_cast<std::size_t>(beams * slots_per_beam)) {
    throw Error(Errc::InvalidArgument, "more nodes than camera slots");
  }
  if (!(link_bandwidth > 0) || !(server_nic_bandwidth > 0)) {
    throw Error(Errc::InvalidArgument, "bandwidths must be positive");
  }
  if (link_latency < Micros{0}) throw Error(Errc::InvalidArgument, "negative latency");
  if (frame_width == 0 || frame_height == 0) throw Error(Errc::InvalidArgument, "empty frames");
  for (const auto& f : fault_plan) {
    if (f.at < Micros{0}) throw Error(Errc::InvalidArgument, "fault before time zero");
  }
}

std::vector<std::string> ClusterSpec::node_ids() const {
  const int width = std::max(2, static_cast<int>(std::to_string(node_count).size()));
  std::vector<std::string> ids;
  for (std::size_t i = 1; i <= node_count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "n%0*zu", width, i);
    ids.emplace_back(buf);
  }
  return ids;
}

nlohmann::json ClusterSpec::to_json() const {
  nlohmann::json faults = nlohmann::json::array();
  for (const auto& f : fault_plan) {
    faults.push_back({{"at", to_seconds(f.at)}, {"node", f.node_id}, {"kind", to_string(f.kind)}});
  }
  return {{"node_count", node_count},
          {"beams", beams},
          {"slots_per_beam", slots_per_beam},
          {"link_latency", to_seconds(link_latency)},
          {"link_bandwidth", link_bandwidth},
          {"server_nic_bandwidth", server_nic_bandwidth},
          {"seed", seed},
          {"fault_plan", faults},
          {"frame_width", frame_width},
          {"frame_height", frame_height},
          {"exposure", to_seconds(exposure)},
          {"staging_read_rate", staging_read_rate},
          {"staging_write_rate", staging_write_rate},
          {"heartbeat_period", to_seconds(heartbeat_period)},
          {"reconnect_base", to_seconds(reconnect_base)},
          {"jitter_fraction", jitter_fraction},
          {"time_cap", to_seconds(time_cap)}};
}

ClusterSpec ClusterSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "cluster spec must be an object");
  static const std::set<std::string> known = {
      "node_count",     "beams",         "slots_per_beam", "link_latency",      "link_bandwidth",
      "server_nic_bandwidth", "seed",    "fault_plan",     "frame_width",       "frame_height",
      "exposure",       "staging_read_rate", "staging_write_rate", "heartbeat_period", "reconnect_base",
      "jitter_fraction", "time_cap"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw Error(Errc::InvalidArgument, "unknown cluster spec field: " + k);
  }
  ClusterSpec s;
  try {
    s.node_count = j.value("node_count", s.node_count);
    s.beams = j.value("beams", s.beams);
    s.slots_per_beam = j.value("slots_per_beam", s.slots_per_beam);
    s.link_latency = from_seconds(j.value("link_latency", to_seconds(s.link_latency)));
    s.link_bandwidth = j.value("link_bandwidth", s.link_bandwidth);
    s.server_nic_bandwidth = j.value("server_nic_bandwidth", s.server_nic_bandwidth);
    s.seed = j.value("seed", s.seed);
    s.frame_width = j.value("frame_width", s.frame_width);
    s.frame_height = j.value("frame_height", s.frame_height);
    s.exposure = from_seconds(j.value("exposure", to_seconds(s.exposure)));
    s.staging_read_rate = j.value("staging_read_rate", s.staging_read_rate);
    s.staging_write_rate = j.value("staging_write_rate", s.staging_write_rate);
    s.heartbeat_period = from_seconds(j.value("heartbeat_period", to_seconds(s.heartbeat_period)));
    s.reconnect_base = from_seconds(j.value("reconnect_base", to_seconds(s.reconnect_base)));
    s.jitter_fraction = j.value("jitter_fraction", s.jitter_fraction);
    s.time_cap = from_seconds(j.value("time_cap", to_seconds(s.time_cap)));
    if (j.contains("fault_plan")) {
      for (const auto& f : j.at("fault_plan")) {
        s.fault_plan.push_back({from_seconds(f.at("at").get<double>()), f.at("node").get<std::string>(),
                                fault_kind_from_string(f.at("kind").get<std::string>())});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad cluster spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<Fault> inject_fault(const ClusterSpec& spec, Micros at, const std::string& node_id, FaultKind kind) {
  if (at < Micros{0}) throw Error(Errc::InvalidArgument, "fault before time zero");
  const auto ids = spec.node_ids();
  if (std::find(ids.begin(), ids.end(), node_id) == ids.end()) throw Error(Errc::UnknownNode, node_id);
  auto plan = spec.fault_plan;
  plan.push_back({at, node_id, kind});
  return plan;
}

Scenario scenario_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_object() ? j.at("actions") : j;
  if (!list.is_array()) throw Error(Errc::InvalidArgument, "scenario must be a list of actions");
  Scenario out;
  try {
    for (const auto& a : list) {
      Action act;
      act.at = from_seconds(a.value("at", 0.0));
      const std::string kind = a.at("action").get<std::string>();
      if (kind == "capture") {
        act.kind = Action::Kind::Capture;
      } else if (kind == "lights") {
        act.kind = Action::Kind::Lights;
      } else if (kind == "pattern") {
        act.kind = Action::Kind::Pattern;
      } else if (kind == "fleet") {
        act.kind = Action::Kind::Fleet;
      } else if (kind == "wait") {
        act.kind = Action::Kind::Wait;
      } else {
        throw Error(Errc::InvalidArgument, "unknown action: " + kind);
      }
      if (a.contains("pattern")) act.pattern = protocol::pattern_from_json(a.at("pattern"));
      const int level = a.value("light", a.value("level", 100));
      const auto lvl = lighting::light_level_from_percent(level);
      if (!lvl) throw Error(Errc::InvalidArgument, "light level must be 0, 50 or 100");
      act.light = *lvl;
      act.command = a.value("command", "");
      act.targets = a.value("targets", "all");
      act.limit = a.value("limit", fleet::kDefaultConcurrency);
      act.timeout = from_seconds(a.value("timeout", 30.0));
      if (act.kind == Action::Kind::Pattern && !act.pattern) throw Error(Errc::InvalidArgument, "pattern action needs a pattern");
      if (act.kind == Action::Kind::Fleet && act.command.empty()) throw Error(Errc::InvalidArgument, "fleet action needs a command");
      out.push_back(std::move(act));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad scenario: ") + e.what());
  }
  return out;
}

nlohmann::json SimReport::to_json() const {
  nlohmann::json j;
  j["virtual_duration"] = virtual_duration;
  j["sessions"] = nlohmann::json::array();
  for (const auto& s : sessions) j["sessions"].push_back(s.to_json());
  j["fleet_jobs"] = nlohmann::json::array();
  for (const auto& f : fleet_jobs) j["fleet_jobs"].push_back(f.to_json());
  j["delivered"] = delivered;
  nlohmann::json rd = nlohmann::json::object();
  for (const auto& [n, ds] : reconnect_delays) {
    if (ds.empty()) continue;
    auto& arr = rd[n] = nlohmann::json::array();
    for (Micros d : ds) arr.push_back(d.count());
  }
  j["reconnect_delays_us"] = rd;
  j["events"] = nlohmann::json::array();
  for (const auto& e : events) j["events"].push_back(e.to_json());
  return j;
}

struct SimCluster::Node {
  std::string id;
  int beam = 0;
  int slot = 0;
  int flow = 0;
  agent::MockCaptureBackend camera;
  agent::MockCommandBackend shell;
  std::unique_ptr<lighting::RecordingProjector> projector;
  SplitMix64 seeds{0};

  std::shared_ptr<bool> alive;
  std::unique_ptr<AgentCtx> ctx;
  std::unique_ptr<agent::NodeAgent> agent;
  // Earlier incarnations; their timers still hold pointers into them.
  std::vector<std::unique_ptr<AgentCtx>> dead_ctx;
  std::vector<std::unique_ptr<agent::NodeAgent>> dead_agents;
  std::vector<Micros> past_delays;

  bool link_up = true;
  bool crashed = false;
  ConnId conn = 0;
  std::uint64_t epoch = 0;

  Node(std::uint32_t w, std::uint32_t h, Micros exposure) : camera(w, h, exposure) {}
  bool live() const { return alive && *alive; }
};

class SimCluster::AgentCtx final : public agent::AgentContext {
 public:
  AgentCtx(SimCluster& c, Node& n, std::shared_ptr<bool> alive) : c_(c), n_(n), alive_(std::move(alive)) {}

  Micros now() const override { return c_.q_.now(); }
  void connect() override { c_.agent_connect(n_); }
  void disconnect() override { c_.agent_close(n_); }
  void send(const Message& m) override { c_.uplink(n_, m); }
  std::size_t send_backlog() const override { return c_.ingress_.backlog(n_.flow); }
  void schedule(Micros delay, std::function<void()> fn) override {
    c_.q_.after(delay, [alive = alive_, fn = std::move(fn)] {
      if (*alive) fn();
    });
  }
  Micros modeled(Micros d) const override { return d; }
  void run_command(agent::CommandBackend& backend, std::string command,
                   std::function<void(agent::CommandResult)> done) override {
    agent::CommandResult r = backend.run(command);
    schedule(r.duration, [done = std::move(done), r = std::move(r)] { done(r); });
  }
  void log(std::string_view kind, nlohmann::json data) override {
    c_.log_.append(now(), n_.id, std::string(kind), std::move(data));
  }

 private:
  SimCluster& c_;
  Node& n_;
  std::shared_ptr<bool> alive_;
};

class SimCluster::CoordCtx final : public coordinator::CoordinatorContext {
 public:
  explicit CoordCtx(SimCluster& c) : c_(c) {}
  Micros now() const override { return c_.q_.now(); }
  void send(ConnId conn, const Message& m) override { c_.coord_send(conn, m); }
  void close(ConnId conn) override { c_.coord_close(conn); }
  void schedule(Micros delay, std::function<void()> fn) override { c_.q_.after(delay, std::move(fn)); }

 private:
  SimCluster& c_;
};

SimCluster::SimCluster(ClusterSpec spec, std::filesystem::path store_root)
    : spec_(std::move(spec)), ingress_(q_, spec_.server_nic_bandwidth), egress_(q_, spec_.server_nic_bandwidth) {
  spec_.validate();
  coord_ctx_ = std::make_unique<CoordCtx>(*this);
  const int controllers = (spec_.beams + lighting::kStripesPerController - 1) / lighting::kStripesPerController;
  std::vector<lighting::LightController*> lights;
  for (int i = 0; i < controllers; ++i) {
    lights_.push_back(std::make_unique<lighting::RecordingLightController>("mosfet-" + std::to_string(i)));
    lights.push_back(lights_.back().get());
  }
  coordinator::CoordinatorConfig cc;
  cc.beams = spec_.beams;
  cc.slots_per_beam = spec_.slots_per_beam;
  cc.heartbeat_period = spec_.heartbeat_period;
  cc.store_root = std::move(store_root);
  coord_ = std::make_unique<coordinator::Coordinator>(cc, *coord_ctx_, log_, lights);

  SplitMix64 master(spec_.seed);
  const auto ids = spec_.node_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto n = std::make_unique<Node>(spec_.frame_width, spec_.frame_height, spec_.exposure);
    n->id = ids[i];
    n->beam = static_cast<int>(i) / spec_.slots_per_beam;
    n->slot = static_cast<int>(i) % spec_.slots_per_beam;
    n->flow = static_cast<int>(i);
    n->seeds = SplitMix64(master.next());
    if (n->slot == 0) n->projector = std::make_unique<lighting::RecordingProjector>();
    index_[n->id] = i;
    nodes_.push_back(std::move(n));
  }
}

SimCluster::~SimCluster() = default;

SimCluster::Node& SimCluster::node(const std::string& id) {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(Errc::UnknownNode, id);
  return *nodes_[it->second];
}

void SimCluster::start() {
  log_.append(q_.now(), "sim", "cluster_started", spec_.to_json());
  coord_->start();
  for (auto& n : nodes_) boot_agent(*n, false);
  for (const auto& f : spec_.fault_plan) {
    q_.at(f.at, [this, f] { apply_fault(f.node_id, f.kind); });
  }
}

void SimCluster::boot_agent(Node& n, bool delayed) {
  if (n.agent) {
    n.past_delays.insert(n.past_delays.end(), n.agent->reconnect_delays().begin(), n.agent->reconnect_delays().end());
    n.dead_agents.push_back(std::move(n.agent));
    n.dead_ctx.push_back(std::move(n.ctx));
  }
  n.alive = std::make_shared<bool>(true);
  agent::AgentConfig cfg;
  cfg.node_id = n.id;
  cfg.beam = n.beam;
  cfg.slot = n.slot;
  cfg.coordinator_addr = "sim";
  cfg.reconnect_base = spec_.reconnect_base;
  cfg.jitter_fraction = spec_.jitter_fraction;
  cfg.heartbeat_period = spec_.heartbeat_period;
  cfg.staging_read_rate = spec_.staging_read_rate;
  cfg.staging_write_rate = spec_.staging_write_rate;
  cfg.rng_seed = n.seeds.next();
  n.ctx = std::make_unique<AgentCtx>(*this, n, n.alive);
  n.agent = std::make_unique<agent::NodeAgent>(cfg, agent::AgentBackends{&n.camera, &n.shell, n.projector.get()},
                                               *n.ctx);
  n.agent->start(delayed);
}

void SimCluster::drop_connection(Node& n) {
  ingress_.clear(n.flow);
  egress_.clear(n.flow);
  ++n.epoch;
  if (n.conn != 0) conn_node_.erase(n.conn);
  n.conn = 0;
}

void SimCluster::agent_connect(Node& n) {
  auto alive = n.alive;
  if (!n.link_up) {
    q_.after(Micros{0}, [this, &n, alive] {
      if (*alive) n.agent->on_connect_failed();
    });
    return;
  }
  q_.after(spec_.link_latency, [this, &n, alive] {
    if (!*alive) return;
    if (!n.link_up) {
      n.agent->on_connect_failed();
      return;
    }
    if (n.conn != 0) drop_connection(n);
    const ConnId conn = next_conn_++;
    n.conn = conn;
    conn_node_[conn] = static_cast<std::size_t>(n.flow);
    coord_->on_open(conn);
    n.agent->on_connected();
  });
}

void SimCluster::agent_close(Node& n) {
  const ConnId conn = n.conn;
  if (conn == 0) return;
  drop_connection(n);
  q_.after(spec_.link_latency, [this, conn] { coord_->on_closed(conn); });
}

void SimCluster::coord_close(ConnId conn) {
  auto it = conn_node_.find(conn);
  if (it == conn_node_.end()) return;
  Node& n = *nodes_[it->second];
  drop_connection(n);
  auto alive = n.alive;
  q_.after(spec_.link_latency, [&n, alive] {
    if (*alive) n.agent->on_disconnected();
  });
}

namespace {
// Bytes a message costs on the modeled network. Chunk payloads are charged
// at their raw size: base64 is an artifact of the JSON framing and a frame
// over the rig's Ethernet costs its image bytes, not their text encoding.
std::uint64_t charged_bytes(const Message& m, std::size_t wire) {
  if (const auto* c = m.get_if<protocol::FrameChunk>()) {
    const std::size_t text = 4 * ((c->data.size() + 2) / 3);
    return wire - text + c->data.size();
  }
  return wire;
}
}  // namespace

void SimCluster::uplink(Node& n, const Message& m) {
  if (n.conn == 0) return;
  auto wire = std::make_shared<Bytes>(protocol::encode_message(m));
  const ConnId conn = n.conn;
  const std::uint64_t epoch = n.epoch;
  auto alive = n.alive;
  ingress_.enqueue(n.flow, spec_.link_bandwidth, charged_bytes(m, wire->size()), [this, &n, wire, conn, epoch, alive] {
    q_.after(spec_.link_latency, [this, &n, wire, conn, epoch] {
      if (n.epoch != epoch) return;
      coord_->on_message(conn, protocol::decode_message(*wire));
    });
    if (*alive && n.epoch == epoch) n.agent->on_writable();
  });
}

void SimCluster::coord_send(ConnId conn, const Message& m) {
  auto it = conn_node_.find(conn);
  if (it == conn_node_.end()) return;
  Node& n = *nodes_[it->second];
  auto wire = std::make_shared<Bytes>(protocol::encode_message(m));
  const std::uint64_t epoch = n.epoch;
  egress_.enqueue(n.flow, spec_.link_bandwidth, charged_bytes(m, wire->size()), [this, &n, wire, epoch] {
    q_.after(spec_.link_latency, [&n, wire, epoch] {
      if (n.epoch != epoch || !n.live()) return;
      n.agent->on_message(protocol::decode_message(*wire));
    });
  });
}

void SimCluster::apply_fault(const std::string& node_id, FaultKind kind) {
  Node& n = node(node_id);
  log_.append(q_.now(), "sim", "fault", {{"node_id", node_id}, {"kind", to_string(kind)}});
  switch (kind) {
    case FaultKind::Crash:
      if (n.crashed) {
        log_.append(q_.now(), "sim", "fault_noop", {{"node_id", node_id}, {"kind", "Crash"}});
        return;
      }
      *n.alive = false;
      n.crashed = true;
      drop_connection(n);
      break;
    case FaultKind::Disconnect:
      if (!n.link_up || n.crashed) {
        log_.append(q_.now(), "sim", "fault_noop", {{"node_id", node_id}, {"kind", "Disconnect"}});
        return;
      }
      n.link_up = false;
      if (n.conn != 0) {
        drop_connection(n);
        auto alive = n.alive;
        q_.after(Micros{0}, [&n, alive] {
          if (*alive) n.agent->on_disconnected();
        });
      }
      break;
    case FaultKind::Restart:
      if (n.crashed) {
        n.crashed = false;
        n.link_up = true;
        boot_agent(n, true);
      } else if (!n.link_up) {
        n.link_up = true;
      } else {
        log_.append(q_.now(), "sim", "restart_noop", {{"node_id", node_id}});
      }
      break;
  }
}

bool SimCluster::run_until(const std::function<bool()>& done, Micros deadline) {
  while (!done()) {
    if (q_.empty() || q_.next_time() > deadline) {
      q_.run_until(deadline);
      return done();
    }
    q_.step();
  }
  return true;
}

void SimCluster::run_for(Micros d) { q_.run_until(q_.now() + d); }

bool SimCluster::settle(Micros max_wait) {
  return run_until(
      [this] {
        for (const auto& n : nodes_) {
          if (n->crashed || !n->link_up) continue;
          if (n->agent->link() != agent::NodeAgent::Link::Registered) return false;
        }
        return true;
      },
      q_.now() + max_wait);
}

const agent::NodeAgent* SimCluster::agent(const std::string& node_id) const {
  auto it = index_.find(node_id);
  if (it == index_.end()) return nullptr;
  const Node& n = *nodes_[it->second];
  return n.live() ? n.agent.get() : nullptr;
}

bool SimCluster::crashed(const std::string& node_id) const {
  auto it = index_.find(node_id);
  return it != index_.end() && nodes_[it->second]->crashed;
}

std::vector<Micros> SimCluster::reconnect_delays(const std::string& node_id) const {
  auto it = index_.find(node_id);
  if (it == index_.end()) throw Error(Errc::UnknownNode, node_id);
  const Node& n = *nodes_[it->second];
  std::vector<Micros> out = n.past_delays;
  if (n.agent) out.insert(out.end(), n.agent->reconnect_delays().begin(), n.agent->reconnect_delays().end());
  return out;
}

SimReport SimCluster::report() const {
  SimReport r;
  r.virtual_duration = to_seconds(q_.now());
  for (const auto& id : coord_->session_ids()) r.sessions.push_back(coord_->session_report(id));
  for (const auto& id : coord_->job_ids()) r.fleet_jobs.push_back(coord_->fleet_report(id));
  for (const auto& rec : coord_->registry().nodes()) r.delivered[rec.node_id] = rec.frames_delivered;
  for (const auto& n : nodes_) r.reconnect_delays[n->id] = reconnect_delays(n->id);
  r.events = log_.snapshot();
  return r;
}

SimReport run_cluster(const ClusterSpec& spec, const Scenario& scenario, const std::filesystem::path& store_root) {
  SimCluster c(spec, store_root);
  c.start();
  const Micros cap = spec.time_cap;
  auto exhausted = [&](const std::string& what) {
    throw Error(Errc::VirtualTimeExhausted, what + " did not finish before " +
                                                std::to_string(to_seconds(cap)) + " s of virtual time");
  };
  for (const Action& a : scenario) {
    if (a.at > c.now()) {
      if (a.at > cap) exhausted("scenario");
      c.run_for(a.at - c.now());
    }
    switch (a.kind) {
      case Action::Kind::Capture: {
        c.settle();
        const std::string sid = c.coordinator().start_session({a.pattern, a.light});
        if (!c.run_until([&] { return !c.coordinator().active_session(); }, cap)) exhausted("session " + sid);
        break;
      }
      case Action::Kind::Lights:
        c.coordinator().set_lights(a.light);
        break;
      case Action::Kind::Pattern:
        c.coordinator().set_pattern(*a.pattern);
        break;
      case Action::Kind::Fleet: {
        c.settle();
        fleet::FleetJob job;
        job.targets = fleet::TargetSelector::parse(a.targets);
        job.command = a.command;
        job.concurrency_limit = a.limit;
        job.per_node_timeout = a.timeout;
        const std::string id = c.coordinator().start_fleet(job);
        if (!c.run_until([&] { return c.coordinator().fleet_report(id).done; }, cap)) exhausted("fleet job " + id);
        break;
      }
      case Action::Kind::Wait:
        break;
    }
  }
  Micros last_fault{0};
  for (const auto& f : spec.fault_plan) last_fault = std::max(last_fault, f.at);
  if (last_fault >= c.now()) c.run_for(last_fault - c.now() + Micros{1});
  return c.report();
}

}  // namespace bodyrig::sim
