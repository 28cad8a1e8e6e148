#include "bodyrig/coordinator/coordinator.hpp"

#include <cstdio>

#include "bodyrig/core/error.hpp"
#include "bodyrig/protocol/codec.hpp"

namespace bodyrig::coordinator {

using protocol::AckStep;
using protocol::Message;

namespace {

std::string counter_id(char prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

std::optional<double> SessionReport::transfer_seconds() const {
  if (!capture_started_at || !last_frame_at) return std::nullopt;
  return to_seconds(*last_frame_at - *capture_started_at);
}

nlohmann::json SessionReport::to_json() const {
  auto opt_us = [](const std::optional<Micros>& t) { return t ? nlohmann::json(t->count()) : nlohmann::json(nullptr); };
  nlohmann::json j{{"session_id", session_id},
                   {"state", to_string(state)},
                   {"terminal", is_terminal(state)},
                   {"expected_nodes", expected_nodes},
                   {"received", {{"texture", received_texture}, {"pattern", received_pattern}}},
                   {"frames", frames()},
                   {"total_bytes", total_bytes},
                   {"started_at_us", started_at.count()},
                   {"capture_started_at_us", opt_us(capture_started_at)},
                   {"last_frame_at_us", opt_us(last_frame_at)},
                   {"finished_at_us", opt_us(finished_at)},
                   {"missing", missing_to_json(missing)},
                   {"pattern", protocol::pattern_to_json(pattern)},
                   {"light_level", lighting::percent(light)},
                   {"manifest", manifest}};
  const auto t = transfer_seconds();
  j["transfer_seconds"] = t ? nlohmann::json(*t) : nlohmann::json(nullptr);
  return j;
}

Coordinator::Coordinator(CoordinatorConfig cfg, CoordinatorContext& ctx, EventLog& log,
                         std::vector<lighting::LightController*> lights)
    : cfg_(std::move(cfg)),
      ctx_(ctx),
      log_(log),
      lights_(std::move(lights)),
      registry_(cfg_.beams, cfg_.slots_per_beam),
      store_(cfg_.store_root) {
  if (!cfg_.default_pattern.valid()) throw Error(Errc::InvalidArgument, "invalid default pattern");
}

void Coordinator::log(std::string kind, nlohmann::json data) {
  log_.append(ctx_.now(), "coordinator", std::move(kind), std::move(data));
}

void Coordinator::start() {
  log("coordinator_started", {{"beams", cfg_.beams}, {"slots_per_beam", cfg_.slots_per_beam}});
  ctx_.schedule(cfg_.liveness_check, [this] { liveness_tick(); });
}

void Coordinator::liveness_tick() {
  const Micros limit = cfg_.heartbeat_period * cfg_.missed_heartbeats;
  for (const auto& rec : registry_.nodes()) {
    if (rec.state == NodeState::Connected && ctx_.now() - rec.last_heartbeat > limit) {
      node_lost(rec.node_id, "heartbeat");
    }
  }
  ctx_.schedule(cfg_.liveness_check, [this] { liveness_tick(); });
}

void Coordinator::on_open(ConnId conn) { conns_[conn] = Conn{}; }

void Coordinator::on_closed(ConnId conn) {
  auto it = conns_.find(conn);
  if (it == conns_.end()) return;
  const auto node = it->second.node_id;
  conns_.erase(it);
  if (node) {
    auto nc = node_conn_.find(*node);
    if (nc != node_conn_.end() && nc->second == conn) {
      node_conn_.erase(nc);
      node_lost(*node, "connection closed");
    }
  }
}

void Coordinator::node_lost(const std::string& node, const std::string& reason) {
  if (!registry_.mark_lost(node)) return;
  log("node_lost", {{"node_id", node}, {"reason", reason}});
  if (auto nc = node_conn_.find(node); nc != node_conn_.end()) {
    const ConnId conn = nc->second;
    node_conn_.erase(nc);
    conns_.erase(conn);
    ctx_.close(conn);
  }
  if (active_) step(*active_, ev::NodeLost{node});
  if (active_job_) {
    auto& run = jobs_.at(*active_job_);
    if (run.is_running(node)) {
      run.on_unreachable(node);
      fleet_finish_exec(node, "Unreachable");
    }
    fleet_pump();
  }
}

void Coordinator::on_message(ConnId conn, const Message& m) {
  auto it = conns_.find(conn);
  if (it == conns_.end()) return;
  Conn& c = it->second;
  if (const auto* h = m.get_if<protocol::Hello>()) {
    handle_hello(conn, *h);
    return;
  }
  if (!c.node_id) {
    ctx_.send(conn, protocol::ErrorReport{"IllegalEvent", "send Hello first"});
    return;
  }
  const std::string node = *c.node_id;
  registry_.touch(node, ctx_.now());
  std::visit(overloaded{
                 [&](const protocol::Heartbeat&) {},
                 [&](const protocol::CaptureAck& a) { handle_ack(node, a); },
                 [&](const protocol::FrameHeader& h) { handle_header(conn, c, h); },
                 [&](const protocol::FrameChunk& ch) { handle_chunk(conn, c, ch); },
                 [&](const protocol::FrameComplete& f) { handle_complete(conn, c, f); },
                 [&](const protocol::FleetResult& r) { handle_fleet_result(node, r); },
                 [&](const protocol::ErrorReport& e) {
                   log("node_error", {{"node_id", node}, {"code", e.code}, {"detail", e.detail}});
                 },
                 [&](const auto& other) {
                   log("unexpected_message", {{"node_id", node}, {"kind", protocol::to_string(Message(other).kind())}});
                 },
             },
             m.payload);
}

void Coordinator::handle_hello(ConnId conn, const protocol::Hello& h) {
  const NodeRecord* before = registry_.find(h.node_id);
  const bool known = before != nullptr;
  try {
    registry_.register_node(h, ctx_.now());
  } catch (const Error& e) {
    log("registration_rejected", {{"node_id", h.node_id}, {"reason", to_string(e.code())}, {"detail", e.what()}});
    ctx_.send(conn, protocol::HelloAck{h.node_id, false, std::string(to_string(e.code()))});
    return;
  }
  if (auto old = node_conn_.find(h.node_id); old != node_conn_.end() && old->second != conn) {
    const ConnId stale = old->second;
    conns_.erase(stale);
    ctx_.close(stale);
  }
  node_conn_[h.node_id] = conn;
  conns_[conn].node_id = h.node_id;
  const NodeRecord& rec = *registry_.find(h.node_id);
  log("node_registered", {{"node_id", h.node_id},
                          {"beam", h.beam},
                          {"slot", h.slot},
                          {"state", to_string(rec.state)},
                          {"reconnect", known},
                          {"frames_delivered", rec.frames_delivered}});
  ctx_.send(conn, protocol::HelloAck{h.node_id, true, {}});
}

void Coordinator::handle_ack(const std::string& node, const protocol::CaptureAck& a) {
  if (a.step == AckStep::Stored) return;
  if (a.session_id.empty()) {
    log("node_ack", {{"node_id", node}, {"step", protocol::to_string(a.step)}, {"ok", a.ok}});
    return;
  }
  if (!active_ || *active_ != a.session_id) return;  // a late ack for an older session
  if (a.step == AckStep::Capture && !a.ok) {
    log("capture_failed", {{"session_id", a.session_id}, {"node_id", node}, {"error", a.error}});
  }
  switch (a.step) {
    case AckStep::Light:
      step(a.session_id, ev::LightAck{node});
      break;
    case AckStep::Pattern:
      step(a.session_id, ev::PatternAck{node});
      break;
    case AckStep::Capture:
      step(a.session_id, ev::CaptureAck{node, a.phase.value_or(Phase::Texture), a.ok});
      break;
    case AckStep::Stored:
      break;
  }
}

void Coordinator::handle_header(ConnId, Conn& c, const protocol::FrameHeader& h) {
  c.partial[{h.session_id, h.phase}] = Partial{h, {}, 0};
  c.partial[{h.session_id, h.phase}].bytes.reserve(h.byte_size);
}

void Coordinator::handle_chunk(ConnId conn, Conn& c, const protocol::FrameChunk& ch) {
  auto it = c.partial.find({ch.session_id, ch.phase});
  if (it == c.partial.end()) return;  // header lost with an earlier connection
  Partial& p = it->second;
  if (ch.index != p.next || p.bytes.size() + ch.data.size() > p.header.byte_size) {
    c.partial.erase(it);
    reject_frame(conn, ch.session_id, ch.node_id, ch.phase, Errc::InvalidFrame);
    return;
  }
  ++p.next;
  p.bytes.insert(p.bytes.end(), ch.data.begin(), ch.data.end());
}

void Coordinator::reject_frame(ConnId conn, const std::string& session_id, const std::string& node, Phase phase,
                               Errc code) {
  log("frame_rejected",
      {{"session_id", session_id}, {"node_id", node}, {"phase", to_string(phase)}, {"error", to_string(code)}});
  ctx_.send(conn, protocol::CaptureAck{session_id, node, AckStep::Stored, phase, false, std::string(to_string(code))});
}

void Coordinator::handle_complete(ConnId conn, Conn& c, const protocol::FrameComplete& f) {
  auto it = c.partial.find({f.session_id, f.phase});
  if (it == c.partial.end()) return;
  Partial p = std::move(it->second);
  c.partial.erase(it);
  const std::string& node = *c.node_id;
  if (p.header.node_id != node) {
    reject_frame(conn, f.session_id, p.header.node_id, f.phase, Errc::UnknownNode);
    return;
  }
  auto s = sessions_.find(f.session_id);
  if (s == sessions_.end()) {
    reject_frame(conn, f.session_id, node, f.phase, Errc::SessionClosed);
    return;
  }
  SessionEntry& entry = s->second;
  try {
    const SessionState before = entry.fsm.state;
    CollectResult r = collect_frame(entry.fsm, store_, p.header, p.bytes);
    ctx_.send(conn, protocol::CaptureAck{f.session_id, node, AckStep::Stored, f.phase, true, {}});
    if (r.outcome == CaptureStore::Outcome::Duplicate) {
      log("frame_duplicate", {{"session_id", f.session_id}, {"node_id", node}, {"phase", to_string(f.phase)}});
      return;
    }
    registry_.record_delivery(node);
    entry.report.last_frame_at = ctx_.now();
    entry.report.total_bytes += p.header.byte_size;
    const CaptureSession& next = r.step.session;
    log("frame_received", {{"session_id", f.session_id},
                           {"node_id", node},
                           {"phase", to_string(f.phase)},
                           {"bytes", p.header.byte_size},
                           {"sha256", p.header.sha256},
                           {"captured_at_us", p.header.captured_at_us},
                           {"progress",
                            {{"texture", next.received_in(Phase::Texture)},
                             {"pattern", next.received_in(Phase::Pattern)},
                             {"expected", next.expected.size()}}}});
    apply(entry, before, std::move(r.step));
  } catch (const Error& e) {
    reject_frame(conn, f.session_id, node, f.phase, e.code());
  }
}

void Coordinator::step(const std::string& session_id, const SessionEvent& e) {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return;
  SessionEntry& entry = it->second;
  const SessionState before = entry.fsm.state;
  try {
    apply(entry, before, session_step(entry.fsm, e));
  } catch (const Error& err) {
    log("session_event_rejected", {{"session_id", session_id},
                                   {"event", event_name(e)},
                                   {"state", to_string(before)},
                                   {"error", to_string(err.code())}});
  }
}

void Coordinator::apply(SessionEntry& entry, SessionState before, StepResult r) {
  const std::string sid = entry.fsm.session_id;
  const std::set<std::string> dropped_before = entry.fsm.dropped;
  entry.fsm = std::move(r.session);
  for (const auto& n : entry.fsm.dropped) {
    if (!dropped_before.contains(n)) log("session_node_dropped", {{"session_id", sid}, {"node_id", n}});
  }
  entry.report.state = entry.fsm.state;
  entry.report.received_texture = entry.fsm.received_in(Phase::Texture);
  entry.report.received_pattern = entry.fsm.received_in(Phase::Pattern);
  if (entry.fsm.state != before) {
    log("session_state", {{"session_id", sid}, {"from", to_string(before)}, {"state", to_string(entry.fsm.state)}});
  }
  auto send_all = [&](const std::vector<std::string>& targets, const Message& m) {
    for (const auto& n : targets) {
      if (auto c = node_conn_.find(n); c != node_conn_.end()) ctx_.send(c->second, m);
    }
  };
  for (Effect& fx : r.effects) {
    switch (fx.kind) {
      case Effect::Kind::SendLights: {
        const auto rep = lighting::set_light_level(entry.fsm.light, lights_);
        log("lights_set", {{"level", lighting::percent(rep.level)},
                           {"controllers", rep.acks.size()},
                           {"failures", rep.failures.size()}});
        send_all(fx.targets, protocol::LightCommand{sid, entry.fsm.light});
        break;
      }
      case Effect::Kind::SendCapture: {
        protocol::CaptureCommand cmd{sid, fx.phase, std::nullopt, cfg_.exposure_deadline_ms};
        if (fx.phase == Phase::Pattern) cmd.pattern_ref = entry.fsm.pattern;
        if (fx.phase == Phase::Texture) entry.report.capture_started_at = ctx_.now();
        log("capture_fanout", {{"session_id", sid}, {"phase", to_string(fx.phase)}, {"nodes", fx.targets}});
        send_all(fx.targets, cmd);
        break;
      }
      case Effect::Kind::SendPattern:
        log("pattern_fanout", {{"session_id", sid}, {"nodes", fx.targets.size()}});
        send_all(fx.targets, protocol::PatternCommand{sid, entry.fsm.pattern});
        break;
      case Effect::Kind::ArmDeadline:
        ctx_.schedule(fx.delay, [this, sid, st = fx.state] {
          if (active_ && *active_ == sid) step(sid, ev::Timeout{st});
        });
        break;
      case Effect::Kind::Finished: {
        entry.report.finished_at = ctx_.now();
        entry.report.missing = entry.fsm.missing;
        entry.report.manifest = store_.finalize(sid).string();
        if (active_ && *active_ == sid) active_.reset();
        const auto t = entry.report.transfer_seconds();
        log("session_finished", {{"session_id", sid},
                                 {"state", to_string(entry.fsm.state)},
                                 {"frames", entry.report.frames()},
                                 {"missing", missing_to_json(entry.fsm.missing)},
                                 {"total_bytes", entry.report.total_bytes},
                                 {"transfer_seconds", t ? nlohmann::json(*t) : nlohmann::json(nullptr)}});
        break;
      }
    }
  }
}

bool Coordinator::busy() const noexcept { return active_.has_value() || active_job_.has_value(); }

std::optional<std::string> Coordinator::active_session() const { return active_; }

std::string Coordinator::start_session(const SessionRequest& req) {
  if (active_) throw Error(Errc::SessionActive, "session " + *active_ + " is running");
  if (active_job_) throw Error(Errc::SessionActive, "fleet job " + *active_job_ + " is running");
  const lighting::PatternSpec pattern = req.pattern.value_or(cfg_.default_pattern);
  if (!pattern.valid() || pattern.kind != lighting::PatternKind::RandomDot) {
    throw Error(Errc::InvalidArgument, "session pattern must be a valid dot pattern");
  }
  const std::string sid = counter_id('s', ++session_counter_);
  SessionEntry entry;
  entry.fsm.session_id = sid;
  const auto ids = registry_.connected_ids();
  entry.fsm.expected = {ids.begin(), ids.end()};
  entry.fsm.pattern = pattern;
  entry.fsm.light = req.light;
  entry.fsm.deadlines = cfg_.deadlines;
  entry.report.session_id = sid;
  entry.report.expected_nodes = ids.size();
  entry.report.started_at = ctx_.now();
  entry.report.pattern = pattern;
  entry.report.light = req.light;
  store_.open_session(SessionMeta{sid, ctx_.now(), req.light, pattern});
  sessions_.emplace(sid, std::move(entry));
  active_ = sid;
  log("session_started", {{"session_id", sid},
                          {"expected_nodes", ids.size()},
                          {"light_level", lighting::percent(req.light)},
                          {"pattern", protocol::pattern_to_json(pattern)}});
  step(sid, ev::Start{});
  return sid;
}

const CaptureSession* Coordinator::session(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : &it->second.fsm;
}

SessionReport Coordinator::session_report(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::NotFound, "no session " + session_id);
  return it->second.report;
}

nlohmann::json Coordinator::session_json(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::NotFound, "no session " + session_id);
  nlohmann::json j = it->second.report.to_json();
  const CaptureSession& s = it->second.fsm;
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : s.expected) {
    nlohmann::json row{{"node_id", n}, {"dropped", s.dropped.contains(n)}};
    for (Phase p : kPhases) row[std::string(to_string(p))] = s.received.contains({p, n}) ? "received" : "pending";
    nodes.push_back(std::move(row));
  }
  j["nodes"] = std::move(nodes);
  return j;
}

std::vector<std::string> Coordinator::session_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

std::vector<std::string> Coordinator::job_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : jobs_) out.push_back(id);
  return out;
}

nlohmann::json Coordinator::nodes_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& r : registry_.nodes()) {
    nodes.push_back({{"node_id", r.node_id},
                     {"beam", r.beam},
                     {"slot", r.slot},
                     {"state", to_string(r.state)},
                     {"last_heartbeat_us", r.last_heartbeat.count()},
                     {"frames_delivered", r.frames_delivered}});
  }
  return {{"rig", {{"beams", cfg_.beams}, {"slots_per_beam", cfg_.slots_per_beam}}},
          {"now_us", ctx_.now().count()},
          {"active_session", active_ ? nlohmann::json(*active_) : nlohmann::json(nullptr)},
          {"nodes", std::move(nodes)}};
}

lighting::LightReport Coordinator::set_lights(lighting::LightLevel level) {
  const auto rep = lighting::set_light_level(level, lights_);
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : rep.failures) failures.push_back(f.name);
  log("lights_set", {{"level", lighting::percent(level)}, {"controllers", rep.acks.size()}, {"failures", failures}});
  return rep;
}

void Coordinator::set_pattern(const lighting::PatternSpec& p) {
  if (!p.valid()) throw Error(Errc::InvalidArgument, "invalid pattern");
  if (p.kind == lighting::PatternKind::RandomDot) cfg_.default_pattern = p;
  const auto ids = registry_.connected_ids();
  for (const auto& n : ids) ctx_.send(node_conn_.at(n), protocol::PatternCommand{"", p});
  log("pattern_set", {{"pattern", protocol::pattern_to_json(p)}, {"nodes", ids.size()}});
}

std::string Coordinator::start_fleet(fleet::FleetJob job) {
  if (active_) throw Error(Errc::SessionActive, "session " + *active_ + " is running");
  if (active_job_) throw Error(Errc::SessionActive, "fleet job " + *active_job_ + " is running");
  job.validate();
  const auto nodes = registry_.nodes();
  auto targets = fleet::resolve(job.targets, nodes);
  job.job_id = counter_id('j', ++job_counter_);
  const std::string id = job.job_id;
  fleet::FleetRun run(job, targets);
  for (const auto& t : targets) {
    const NodeRecord* rec = registry_.find(t);
    if (rec == nullptr || rec->state != NodeState::Connected) run.on_unreachable(t);
  }
  jobs_.emplace(id, std::move(run));
  active_job_ = id;
  log("fleet_started", {{"job_id", id},
                        {"command", job.command},
                        {"targets", targets.size()},
                        {"limit", job.concurrency_limit},
                        {"selector", job.targets.to_string()}});
  fleet_pump();
  return id;
}

void Coordinator::fleet_pump() {
  if (!active_job_) return;
  const std::string id = *active_job_;
  auto& run = jobs_.at(id);
  // A node found unreachable at launch frees its slot at once, so refill.
  bool refill = true;
  while (refill) {
    refill = false;
    for (const auto& node : run.launch()) {
      auto c = node_conn_.find(node);
      if (c == node_conn_.end()) {
        run.on_unreachable(node);
        refill = true;
        continue;
      }
      const std::uint64_t token = ++exec_counter_;
      exec_token_[node] = token;
      log("fleet_exec_start", {{"job_id", id}, {"node_id", node}});
      ctx_.send(c->second, protocol::FleetCommand{id, run.job().command, run.job().per_node_timeout.count() / 1000});
      ctx_.schedule(run.job().per_node_timeout, [this, id, node, token] {
        if (!active_job_ || *active_job_ != id) return;
        auto t = exec_token_.find(node);
        if (t == exec_token_.end() || t->second != token) return;
        if (jobs_.at(id).on_timeout(node)) {
          fleet_finish_exec(node, "Timeout");
          fleet_pump();
        }
      });
    }
  }
  if (run.done()) {
    const auto rep = run.report();
    std::size_t ok = 0;
    for (const auto& r : rep.rows) ok += r.status == fleet::RowStatus::Ok;
    log("fleet_finished", {{"job_id", id}, {"rows", rep.rows.size()}, {"ok", ok}, {"peak", rep.peak_concurrency}});
    active_job_.reset();
  }
}

void Coordinator::fleet_finish_exec(const std::string& node, const char* status) {
  exec_token_.erase(node);
  log("fleet_exec_end", {{"job_id", *active_job_}, {"node_id", node}, {"status", status}});
}

void Coordinator::handle_fleet_result(const std::string& node, const protocol::FleetResult& r) {
  if (!active_job_ || *active_job_ != r.job_id) return;
  auto& run = jobs_.at(r.job_id);
  if (!run.on_result(node, r.exit_status, r.output, r.duration_ms)) return;
  fleet_finish_exec(node, r.exit_status == 0 ? "Ok" : "Failed");
  fleet_pump();
}

fleet::FleetReport Coordinator::fleet_report(const std::string& job_id) const {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::NotFound, "no fleet job " + job_id);
  return it->second.report();
}

}  // namespace bodyrig::coordinator
