#include <deque>
#include <map>

#include "bodyrig/coordinator/coordinator.hpp"
#include "bodyrig/core/digest.hpp"
#include "bodyrig/core/error.hpp"
#include "bodyrig/fleet/fleet.hpp"
#include "doctest.h"
#include "support/temp_dir.hpp"

using namespace bodyrig;
using namespace bodyrig::coordinator;
using protocol::Message;

namespace {

class FakeCtx final : public CoordinatorContext {
 public:
  Micros now() const override { return now_; }
  void send(ConnId conn, const Message& m) override {
    outbox.push_back({conn, m});
    history.push_back({conn, m});
  }
  void close(ConnId conn) override { closed.push_back(conn); }
  void schedule(Micros delay, std::function<void()> fn) override {
    timers.emplace(now_ + delay, std::move(fn));
  }

  void advance(Micros d) {
    const Micros end = now_ + d;
    while (!timers.empty() && timers.begin()->first <= end) {
      auto it = timers.begin();
      now_ = it->first;
      auto fn = std::move(it->second);
      timers.erase(it);
      fn();
    }
    now_ = end;
  }

  template <typename T>
  std::vector<T> sent_to(ConnId conn) const {
    std::vector<T> out;
    for (const auto& [c, m] : history) {
      if (c != conn) continue;
      if (const auto* p = m.template get_if<T>()) out.push_back(*p);
    }
    return out;
  }

  Micros now_{0};
  std::multimap<Micros, std::function<void()>> timers;
  std::deque<std::pair<ConnId, Message>> outbox;  // not yet consumed by play_agents
  std::vector<std::pair<ConnId, Message>> history;
  std::vector<ConnId> closed;
};

struct Rig {
  test::TempDir dir{"coord"};
  FakeCtx ctx;
  EventLog log;
  lighting::RecordingLightController bank{"bank0"};
  std::unique_ptr<Coordinator> coord;

  Rig() {
    CoordinatorConfig cfg;
    cfg.store_root = dir.path();
    coord = std::make_unique<Coordinator>(cfg, ctx, log, std::vector<lighting::LightController*>{&bank});
    coord->start();
  }

  void hello(ConnId conn, const std::string& id, int beam, int slot) {
    coord->on_open(conn);
    coord->on_message(conn, protocol::Hello{id, beam, slot});
  }

  std::size_t count(std::string_view kind) const {
    std::size_t n = 0;
    for (const auto& e : log.snapshot()) n += e.kind == kind;
    return n;
  }
};

Bytes frame_bytes(const std::string& node, Phase p, std::size_t size) {
  Bytes b(size);
  for (std::size_t i = 0; i < size; ++i) b[i] = static_cast<std::uint8_t>(i * 31 + node.size() + int(p));
  return b;
}

// Plays well-behaved agents for every connection in `nodes` until the
// outbox runs dry. `tamper` corrupts one frame's checksum.
void play_agents(Rig& r, const std::map<ConnId, std::string>& nodes, std::size_t frame_size = 100'000,
                 std::optional<std::pair<std::string, Phase>> tamper = std::nullopt) {
  while (!r.ctx.outbox.empty()) {
    auto [conn, m] = r.ctx.outbox.front();
    r.ctx.outbox.pop_front();
    auto it = nodes.find(conn);
    if (it == nodes.end()) continue;
    const std::string& id = it->second;
    if (const auto* l = m.get_if<protocol::LightCommand>()) {
      r.coord->on_message(conn, protocol::CaptureAck{l->session_id, id, protocol::AckStep::Light, {}, true, {}});
    } else if (const auto* p = m.get_if<protocol::PatternCommand>()) {
      r.coord->on_message(conn, protocol::CaptureAck{p->session_id, id, protocol::AckStep::Pattern, {}, true, {}});
    } else if (const auto* c = m.get_if<protocol::CaptureCommand>()) {
      r.coord->on_message(conn, protocol::CaptureAck{c->session_id, id, protocol::AckStep::Capture, c->phase, true, {}});
      const Bytes b = frame_bytes(id, c->phase, frame_size);
      std::string sum = sha256_hex(b);
      if (tamper && tamper->first == id && tamper->second == c->phase) sum[0] = sum[0] == '0' ? '1' : '0';
      const auto chunks = static_cast<std::uint32_t>((b.size() + protocol::kMaxChunkBytes - 1) / protocol::kMaxChunkBytes);
      r.coord->on_message(conn, protocol::FrameHeader{c->session_id, id, c->phase, 10, 10, b.size(), sum, r.ctx.now().count(), chunks});
      for (std::uint32_t i = 0; i < chunks; ++i) {
        const std::size_t lo = i * protocol::kMaxChunkBytes;
        const std::size_t hi = std::min(b.size(), lo + protocol::kMaxChunkBytes);
        r.coord->on_message(conn, protocol::FrameChunk{c->session_id, id, c->phase, i, Bytes(b.begin() + lo, b.begin() + hi)});
      }
      r.coord->on_message(conn, protocol::FrameComplete{c->session_id, id, c->phase});
    } else if (const auto* f = m.get_if<protocol::FleetCommand>()) {
      r.coord->on_message(conn, protocol::FleetResult{f->job_id, id, 0, "ok " + id, 5});
    }
  }
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Io;  // nothing thrown
}

}  // namespace

TEST_CASE("messages before Hello are refused") {
  Rig r;
  r.coord->on_open(1);
  r.coord->on_message(1, protocol::Heartbeat{"n01", 1});
  const auto errs = r.ctx.sent_to<protocol::ErrorReport>(1);
  REQUIRE(errs.size() == 1);
  CHECK(errs[0].code == "IllegalEvent");
  CHECK(r.coord->registry().nodes().empty());
}

TEST_CASE("registration accepts, rejects slot conflicts and replaces stale connections") {
  Rig r;
  r.hello(1, "n01", 0, 0);
  auto acks = r.ctx.sent_to<protocol::HelloAck>(1);
  REQUIRE(acks.size() == 1);
  CHECK(acks[0].accepted);

  r.hello(2, "n02", 0, 0);
  acks = r.ctx.sent_to<protocol::HelloAck>(2);
  REQUIRE(acks.size() == 1);
  CHECK_FALSE(acks[0].accepted);
  CHECK(acks[0].reason == "SlotConflict");
  CHECK(r.count("registration_rejected") == 1);

  r.hello(3, "n03", 24, 0);  // outside a 24-beam rig
  CHECK_FALSE(r.ctx.sent_to<protocol::HelloAck>(3).at(0).accepted);

  // n01 again on a new connection: the old one is closed
  r.hello(4, "n01", 0, 0);
  CHECK(r.ctx.sent_to<protocol::HelloAck>(4).at(0).accepted);
  CHECK(r.ctx.closed == std::vector<ConnId>{1});
  const auto nodes = r.coord->nodes_json()["nodes"];
  REQUIRE(nodes.size() == 1);
  CHECK(nodes[0]["node_id"] == "n01");
  CHECK(nodes[0]["state"] == "Connected");
  // closing the replaced connection does not mark the node lost
  r.coord->on_closed(1);
  CHECK(r.coord->registry().find("n01")->state == NodeState::Connected);
}

TEST_CASE("silence for three heartbeat periods marks a node lost") {
  Rig r;
  r.hello(1, "n01", 0, 0);
  r.hello(2, "n02", 0, 1);
  for (int i = 0; i < 10; ++i) {
    r.ctx.advance(Micros{500'000});
    r.coord->on_message(1, protocol::Heartbeat{"n01", static_cast<std::uint64_t>(i)});
  }
  CHECK(r.coord->registry().find("n01")->state == NodeState::Connected);
  CHECK(r.coord->registry().find("n02")->state == NodeState::Lost);
  CHECK(r.ctx.closed == std::vector<ConnId>{2});
  // and it may come back
  r.hello(3, "n02", 0, 1);
  CHECK(r.coord->registry().find("n02")->state == NodeState::Connected);
}

TEST_CASE("a closed connection marks its node lost at once") {
  Rig r;
  r.hello(1, "n01", 0, 0);
  r.coord->on_closed(1);
  CHECK(r.coord->registry().find("n01")->state == NodeState::Lost);
  CHECK(r.count("node_lost") == 1);
}

TEST_CASE("a scripted session stores every frame") {
  Rig r;
  std::map<ConnId, std::string> nodes;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "n0" + std::to_string(i + 1);
    r.hello(ConnId(10 + i), id, i / 2, i % 2);
    nodes[ConnId(10 + i)] = id;
  }
  r.ctx.outbox.clear();
  const std::string sid = r.coord->start_session({lighting::PatternSpec::dots(7, 0.5, 64, 32), lighting::LightLevel::Half});
  CHECK(sid == "s0001");
  CHECK(code_of([&] { r.coord->start_session({}); }) == Errc::SessionActive);
  play_agents(r, nodes, 150'000);
  const auto rep = r.coord->session_report(sid);
  CHECK(rep.state == SessionState::Complete);
  CHECK(rep.frames() == 8);
  CHECK(rep.total_bytes == 8 * 150'000);
  CHECK(r.bank.history().back() == lighting::LightLevel::Half);
  CHECK_FALSE(r.coord->active_session());
  // every node got two Stored receipts
  for (const auto& [conn, id] : nodes) {
    std::size_t stored = 0;
    for (const auto& a : r.ctx.sent_to<protocol::CaptureAck>(conn)) stored += a.step == protocol::AckStep::Stored && a.ok;
    CHECK(stored == 2);
  }
  const auto check = verify_manifest(r.dir.path() / "sessions" / sid);
  CHECK(check.rows == 8);
  CHECK(check.verified == 8);
  const auto j = r.coord->session_json(sid);
  CHECK(j["state"] == "Complete");
  CHECK(j["frames"] == 8);
  CHECK(code_of([&] { r.coord->session_report("s0999"); }) == Errc::NotFound);
}

TEST_CASE("a checksum mismatch is refused and reported to the node") {
  Rig r;
  r.hello(1, "n01", 0, 0);
  r.ctx.outbox.clear();
  const auto sid = r.coord->start_session({});
  play_agents(r, {{1, "n01"}}, 1000, std::pair{std::string("n01"), Phase::Pattern});
  std::vector<protocol::CaptureAck> refused;
  for (const auto& a : r.ctx.sent_to<protocol::CaptureAck>(1)) {
    if (a.step == protocol::AckStep::Stored && !a.ok) refused.push_back(a);
  }
  REQUIRE(refused.size() == 1);
  CHECK(refused[0].error == "ChecksumMismatch");
  CHECK(refused[0].phase == Phase::Pattern);
  CHECK(r.count("frame_rejected") == 1);
  // the session waits for a retry until the transfer deadline
  CHECK(r.coord->active_session() == sid);
  r.ctx.advance(Micros{31'000'000});
  const auto rep = r.coord->session_report(sid);
  CHECK(rep.state == SessionState::PartialFailure);
  CHECK(rep.missing == std::set<FrameKey>{{Phase::Pattern, "n01"}});
}

TEST_CASE("a silent node is dropped at the ack deadline") {
  Rig r;
  r.hello(1, "n01", 0, 0);
  r.hello(2, "n02", 0, 1);
  r.ctx.outbox.clear();
  const auto sid = r.coord->start_session({});
  // only n01 answers; n02 keeps heartbeating but never acks
  play_agents(r, {{1, "n01"}});
  for (int i = 0; i < 12; ++i) {
    r.coord->on_message(1, protocol::Heartbeat{"n01", static_cast<std::uint64_t>(i)});
    r.coord->on_message(2, protocol::Heartbeat{"n02", static_cast<std::uint64_t>(i)});
    r.ctx.advance(Micros{500'000});
    play_agents(r, {{1, "n01"}});
  }
  const auto rep = r.coord->session_report(sid);
  CHECK(rep.state == SessionState::PartialFailure);
  CHECK(rep.frames() == 2);
  CHECK(rep.missing == std::set<FrameKey>{{Phase::Texture, "n02"}, {Phase::Pattern, "n02"}});
}

TEST_CASE("a session with no nodes completes immediately") {
  Rig r;
  const auto sid = r.coord->start_session({});
  CHECK(r.coord->session_report(sid).state == SessionState::Complete);
  CHECK_FALSE(r.coord->busy());
}

TEST_CASE("session pattern must be a dot pattern") {
  Rig r;
  CHECK(code_of([&] { r.coord->start_session({lighting::PatternSpec::black(10, 10)}); }) == Errc::InvalidArgument);
  CHECK(code_of([&] { r.coord->start_session({lighting::PatternSpec::dots(1, 1.5, 10, 10)}); }) ==
        Errc::InvalidArgument);
}

TEST_CASE("fleet job through the engine") {
  Rig r;
  std::map<ConnId, std::string> nodes;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "n0" + std::to_string(i + 1);
    r.hello(ConnId(1 + i), id, i, 0);
    nodes[ConnId(1 + i)] = id;
  }
  r.ctx.outbox.clear();
  fleet::FleetJob job;
  job.command = "uptime";
  job.targets = fleet::TargetSelector::parse("beams:1-3");
  job.concurrency_limit = 2;
  const auto id = r.coord->start_fleet(job);
  // only two commands go out before any result
  std::size_t first_wave = 0;
  for (const auto& [c, m] : r.ctx.outbox) first_wave += m.get_if<protocol::FleetCommand>() != nullptr;
  CHECK(first_wave == 2);
  CHECK(code_of([&] { r.coord->start_session({}); }) == Errc::SessionActive);
  play_agents(r, nodes);
  const auto rep = r.coord->fleet_report(id);
  CHECK(rep.done);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].node_id == "n02");
  CHECK(rep.rows[2].output == "ok n04");
  CHECK(fleet::peak_concurrency(r.log.snapshot(), id) == 2);
  CHECK(code_of([&] { r.coord->fleet_report("j0042"); }) == Errc::NotFound);
}

TEST_CASE("set_lights and set_pattern outside a session") {
  Rig r;
  r.hello(1, "n01", 0, 0);
  r.ctx.outbox.clear();
  const auto rep = r.coord->set_lights(lighting::LightLevel::Off);
  CHECK(rep.level == lighting::LightLevel::Off);
  CHECK(r.bank.history().back() == lighting::LightLevel::Off);
  const auto p = lighting::PatternSpec::dots(3, 0.25, 32, 16);
  r.coord->set_pattern(p);
  CHECK(r.coord->default_pattern() == p);
  const auto sent = r.ctx.sent_to<protocol::PatternCommand>(1);
  REQUIRE(sent.size() == 1);
  CHECK(sent[0].pattern == p);
}
