#include <map>
#include <queue>
#include <set>

#include "bodyrig/agent/node_agent.hpp"
#include "bodyrig/core/error.hpp"
#include "bodyrig/protocol/codec.hpp"
#include "doctest.h"

using namespace bodyrig;
using namespace bodyrig::agent;
using protocol::Message;

namespace {

// Single-threaded stand-in for a runtime. Sent bytes stay in the backlog
// until drain() is called, so chunk flow control is observable.
class FakeContext final : public AgentContext {
 public:
  Micros now() const override { return now_; }
  void connect() override { ++connects; }
  void disconnect() override { ++disconnects; }
  void send(const Message& m) override {
    sent.push_back(m);
    backlog += protocol::encode_message(m).size();
  }
  std::size_t send_backlog() const override { return backlog; }
  void schedule(Micros delay, std::function<void()> fn) override {
    timers.push(Timer{now_ + delay, seq_++, std::move(fn)});
  }
  Micros modeled(Micros d) const override { return d; }
  void run_command(CommandBackend& backend, std::string command,
                   std::function<void(CommandResult)> done) override {
    CommandResult r = backend.run(command);
    schedule(r.duration, [done = std::move(done), r] { done(r); });
  }
  void log(std::string_view kind, nlohmann::json) override { logs.emplace_back(kind); }

  // Runs timers up to and including `until`.
  void advance_to(Micros until) {
    while (!timers.empty() && timers.top().at <= until) {
      Timer t = timers.top();
      timers.pop();
      now_ = t.at;
      t.fn();
    }
    now_ = std::max(now_, until);
  }
  void advance(Micros d) { advance_to(now_ + d); }

  template <class T>
  std::vector<T> sent_of() const {
    std::vector<T> out;
    for (const auto& m : sent) {
      if (const T* p = m.get_if<T>()) out.push_back(*p);
    }
    return out;
  }

  std::vector<Message> sent;
  std::size_t backlog = 0;
  int connects = 0;
  int disconnects = 0;
  std::vector<std::string> logs;

 private:
  struct Timer {
    Micros at;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Timer& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };
  Micros now_{0};
  std::uint64_t seq_ = 0;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers;
};

// Coordinator-side frame assembly, just enough to check what arrived.
struct Receiver {
  struct Partial {
    protocol::FrameHeader header;
    Bytes bytes;
    std::uint32_t next = 0;
  };
  std::map<std::pair<std::string, Phase>, Partial> partial;
  std::map<std::pair<std::string, Phase>, int> complete_copies;
  std::map<std::pair<std::string, Phase>, std::string> stored_checksum;
  std::size_t consumed = 0;

  // Feeds every message sent since the last call; returns Stored acks to
  // deliver back.
  std::vector<protocol::CaptureAck> consume(const FakeContext& ctx, bool corrupt = false) {
    std::vector<protocol::CaptureAck> acks;
    for (; consumed < ctx.sent.size(); ++consumed) {
      const Message& m = ctx.sent[consumed];
      if (auto* h = m.get_if<protocol::FrameHeader>()) {
        partial[{h->session_id, h->phase}] = Partial{*h, {}, 0};
      } else if (auto* c = m.get_if<protocol::FrameChunk>()) {
        auto& p = partial.at({c->session_id, c->phase});
        REQUIRE(c->index == p.next);
        ++p.next;
        p.bytes.insert(p.bytes.end(), c->data.begin(), c->data.end());
      } else if (auto* f = m.get_if<protocol::FrameComplete>()) {
        auto key = std::make_pair(f->session_id, f->phase);
        auto& p = partial.at(key);
        const bool ok = !corrupt && sha256_hex(p.bytes) == p.header.sha256;
        if (ok) {
          ++complete_copies[key];
          stored_checksum[key] = p.header.sha256;
        }
        acks.push_back({f->session_id, f->node_id, protocol::AckStep::Stored, f->phase, ok,
                        ok ? std::string() : std::string("ChecksumMismatch")});
        partial.erase(key);
      }
    }
    return acks;
  }
};

AgentConfig config(std::string id = "n01", std::uint64_t seed = 42) {
  AgentConfig c;
  c.node_id = std::move(id);
  c.rng_seed = seed;
  return c;
}

struct Harness {
  FakeContext ctx;
  MockCaptureBackend camera{400, 300};
  MockCommandBackend shell;
  lighting::RecordingProjector projector;
  NodeAgent agent;

  explicit Harness(AgentConfig cfg = config()) : agent(std::move(cfg), {&camera, &shell, &projector}, ctx) {}

  void register_now() {
    agent.start();
    agent.on_connected();
    agent.on_message(protocol::HelloAck{agent.config().node_id, true, {}});
  }
  // Lets everything queued leave the host and keeps the agent writing.
  void drain() {
    while (ctx.backlog > 0) {
      ctx.backlog = 0;
      agent.on_writable();
    }
  }
};

protocol::CaptureCommand texture(std::string session = "s0001") {
  return {std::move(session), Phase::Texture, std::nullopt, 1000};
}

protocol::CaptureCommand pattern(std::string session = "s0001") {
  return {std::move(session), Phase::Pattern, lighting::PatternSpec::dots(7, 0.5, 1920, 1080), 1000};
}

}  // namespace

TEST_CASE("reconnect delays follow the seeded constant-interval policy") {
  // Frozen from the Python oracle (SplitMix64, seed 42).
  const std::vector<std::int64_t> golden{2096626, 1863964, 1911440, 1937676, 1815212};
  AgentConfig cfg = config("n01", 42);
  SplitMix64 rng(cfg.rng_seed);
  for (std::size_t i = 0; i < golden.size(); ++i) {
    CHECK(next_reconnect_delay(i, cfg, rng).count() == golden[i]);
  }

  SUBCASE("attempt number does not matter") {
    SplitMix64 a(7), b(7);
    for (std::uint64_t i = 0; i < 50; ++i) CHECK(next_reconnect_delay(i, cfg, a) == next_reconnect_delay(0, cfg, b));
  }
  SUBCASE("bounded by the jitter fraction") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      SplitMix64 r(seed);
      for (int i = 0; i < 20; ++i) {
        const auto d = next_reconnect_delay(i, cfg, r).count();
        CHECK(d >= 1'800'000);
        CHECK(d <= 2'200'000);
      }
    }
  }
  SUBCASE("zero jitter is exact") {
    cfg.jitter_fraction = 0.0;
    SplitMix64 r(1);
    CHECK(next_reconnect_delay(3, cfg, r) == Micros{2'000'000});
  }
}

TEST_CASE("agent config validation") {
  AgentConfig c = config();
  CHECK_NOTHROW(c.validate());
  auto bad = [](AgentConfig x) {
    try {
      x.validate();
    } catch (const Error& e) {
      return e.code() == Errc::InvalidArgument;
    }
    return false;
  };
  AgentConfig a = c;
  a.reconnect_base = Micros{0};
  CHECK(bad(a));
  a = c;
  a.jitter_fraction = 1.0;
  CHECK(bad(a));
  a = c;
  a.jitter_fraction = -0.01;
  CHECK(bad(a));
  a = c;
  a.staging_read_rate = 0;
  CHECK(bad(a));
  a = c;
  a.node_id.clear();
  CHECK(bad(a));
}

TEST_CASE("mock frames are deterministic and distinct per node") {
  CaptureRequest req{"s0001", "n01", Phase::Texture, std::nullopt};
  CHECK(mock_frame_bytes(req, 64, 32) == mock_frame_bytes(req, 64, 32));

  const Bytes img = mock_frame_bytes(req, 64, 32);
  const std::string head = "P6\n64 32\n255\n";
  REQUIRE(img.size() == head.size() + 64 * 32 * 3);
  CHECK(std::string(img.begin(), img.begin() + static_cast<std::ptrdiff_t>(head.size())) == head);

  for (Phase ph : kPhases) {
    std::set<std::string> sums;
    for (int i = 1; i <= 96; ++i) {
      char id[8];
      std::snprintf(id, sizeof id, "n%02d", i);
      CaptureRequest r{"s0001", id, ph, ph == Phase::Pattern ? std::optional<std::uint64_t>(7) : std::nullopt};
      sums.insert(sha256_hex(mock_frame_bytes(r, 64, 32)));
    }
    CHECK(sums.size() == 96);
  }

  CaptureRequest other = req;
  other.phase = Phase::Pattern;
  other.pattern_seed = 7;
  CHECK(mock_frame_bytes(other, 64, 32) != img);
  other.pattern_seed = 8;
  CHECK(mock_frame_seed(other) != mock_frame_seed(CaptureRequest{"s0001", "n01", Phase::Pattern, 7}));
}

TEST_CASE("capture_frame") {
  MockCaptureBackend cam(64, 32, Micros{50'000});
  const Frame f = capture_frame(cam, texture(), "n05", Micros{1'000'000});
  CHECK(f.meta.node_id == "n05");
  CHECK(f.meta.byte_size == f.bytes.size());
  CHECK(f.meta.checksum == sha256_hex(f.bytes));
  CHECK(f.meta.captured_at == Micros{1'050'000});
  CHECK(f.meta.width == 64);

  SUBCASE("fault leaves nothing staged") {
    FakeContext ctx;
    MockCaptureBackend broken(64, 32);
    broken.set_fault(true);
    MockCommandBackend sh;
    NodeAgent agent(config(), {&broken, &sh, nullptr}, ctx);
    agent.start();
    agent.on_connected();
    agent.on_message(protocol::HelloAck{"n01", true, {}});
    CHECK_THROWS_AS(broken.capture({"s", "n01", Phase::Texture, std::nullopt}), Error);
    agent.on_message(texture());
    ctx.advance(Micros{1'000'000});
    auto acks = ctx.sent_of<protocol::CaptureAck>();
    REQUIRE(acks.size() == 1);
    CHECK_FALSE(acks[0].ok);
    CHECK(acks[0].error == "BackendFailure");
    CHECK(agent.staged_count() == 0);
  }
  SUBCASE("deadline") {
    cam.set_duration(Micros{2'000'000});
    try {
      capture_frame(cam, texture(), "n05", Micros{0});
      FAIL("expected DeadlineExceeded");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::DeadlineExceeded);
    }
  }
}

TEST_CASE("frame_messages splits into 64 KiB chunks") {
  MockCaptureBackend cam(200, 200);  // 120000 pixel bytes plus header
  const Frame f = capture_frame(cam, texture(), "n01", Micros{0});
  const auto msgs = frame_messages(f);
  const std::size_t chunks = (f.bytes.size() + 65535) / 65536;
  REQUIRE(msgs.size() == chunks + 2);
  CHECK(msgs.front().get_if<protocol::FrameHeader>()->chunk_count == chunks);
  Bytes joined;
  for (std::size_t i = 1; i + 1 < msgs.size(); ++i) {
    const auto* c = msgs[i].get_if<protocol::FrameChunk>();
    REQUIRE(c != nullptr);
    CHECK(c->index == i - 1);
    joined.insert(joined.end(), c->data.begin(), c->data.end());
  }
  CHECK(joined == f.bytes);
  CHECK(msgs.back().kind() == protocol::MessageKind::FrameComplete);
  for (const auto& m : msgs) CHECK_NOTHROW(protocol::validate(m));
}

TEST_CASE("staging and transfer time") {
  AgentConfig c = config();
  // 3e6/10e6 + 3e6/20e6 + 3e6/125e6, computed term by term.
  const double expected = 0.3 + 0.15 + 0.024;
  CHECK(stage_and_transfer_seconds(3'000'000, c, 125e6) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(stage_and_transfer_seconds(3'000'000, c, 125e6) == doctest::Approx(0.474));
  try {
    stage_and_transfer_seconds(0, c, 125e6);
    FAIL("expected InvalidFrame");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvalidFrame);
  }

  SUBCASE("empty frame is rejected by stage") {
    Harness h;
    Frame f;
    f.meta.node_id = "n01";
    f.meta.session_id = "s0001";
    try {
      h.agent.stage(f);
      FAIL("expected InvalidFrame");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InvalidFrame);
    }
    CHECK(h.agent.staged_count() == 0);
  }
}

TEST_CASE("registration, heartbeat and reconnect") {
  Harness h;
  h.agent.start();
  CHECK(h.ctx.connects == 1);
  h.agent.on_connected();
  REQUIRE(h.ctx.sent_of<protocol::Hello>().size() == 1);
  CHECK(h.agent.link() == NodeAgent::Link::Handshaking);
  h.agent.on_message(protocol::HelloAck{"n01", true, {}});
  CHECK(h.agent.link() == NodeAgent::Link::Registered);
  h.ctx.advance(Micros{3'500'000});
  CHECK(h.ctx.sent_of<protocol::Heartbeat>().size() == 4);  // t = 0, 1, 2, 3 s
  CHECK(h.ctx.connects == 1);  // no reconnect attempts while connected

  h.agent.on_disconnected();
  CHECK(h.agent.link() == NodeAgent::Link::Disconnected);
  const auto hb = h.ctx.sent_of<protocol::Heartbeat>().size();
  h.ctx.advance(Micros{1'799'999});
  CHECK(h.ctx.connects == 1);
  CHECK(h.ctx.sent_of<protocol::Heartbeat>().size() == hb);
  h.ctx.advance(Micros{400'001});
  CHECK(h.ctx.connects == 2);
  REQUIRE(h.agent.reconnect_delays().size() == 1);
  CHECK(h.agent.reconnect_delays()[0] == Micros{2'096'626});

  SUBCASE("failed attempts keep the constant interval") {
    h.agent.on_connect_failed();
    h.agent.on_connect_failed();
    h.ctx.advance(Micros{10'000'000});
    for (Micros d : h.agent.reconnect_delays()) {
      CHECK(d >= Micros{1'800'000});
      CHECK(d <= Micros{2'200'000});
    }
  }
  SUBCASE("rejected registration retries later") {
    h.agent.on_connected();
    h.agent.on_message(protocol::HelloAck{"n01", false, "SlotConflict"});
    CHECK(h.agent.link() == NodeAgent::Link::Disconnected);
    CHECK(h.ctx.disconnects == 1);
    const int before = h.ctx.connects;
    h.ctx.advance(Micros{2'200'000});
    CHECK(h.ctx.connects == before + 1);
  }
}

TEST_CASE("capture, stage and upload a session") {
  Harness h;
  h.register_now();
  Receiver rx;

  h.agent.on_message(protocol::LightCommand{"s0001", lighting::LightLevel::Full});
  h.agent.on_message(texture());
  h.agent.on_message(protocol::PatternCommand{"s0001", lighting::PatternSpec::dots(7, 0.5, 1920, 1080)});
  h.agent.on_message(pattern());

  for (int i = 0; i < 200; ++i) {
    h.ctx.advance(Micros{10'000});
    h.drain();
    for (const auto& a : rx.consume(h.ctx)) h.agent.on_message(a);
  }

  const auto acks = h.ctx.sent_of<protocol::CaptureAck>();
  int light = 0, pat = 0, cap = 0;
  for (const auto& a : acks) {
    CHECK(a.ok);
    light += a.step == protocol::AckStep::Light;
    pat += a.step == protocol::AckStep::Pattern;
    cap += a.step == protocol::AckStep::Capture;
  }
  CHECK(light == 1);
  CHECK(pat == 1);
  CHECK(cap == 2);  // one per CaptureCommand
  CHECK(h.agent.light_level() == lighting::LightLevel::Full);
  REQUIRE(h.projector.shown().size() == 2);
  CHECK(h.projector.shown()[0].kind == lighting::PatternKind::Black);
  CHECK(h.projector.shown()[1] == lighting::PatternSpec::dots(7, 0.5, 1920, 1080));

  CHECK(rx.complete_copies.size() == 2);
  for (const auto& [k, n] : rx.complete_copies) CHECK(n == 1);
  REQUIRE(h.agent.receipts().size() == 2);
  CHECK(h.agent.staged_count() == 0);
  for (const auto& r : h.agent.receipts()) CHECK(rx.stored_checksum.at({r.session_id, r.phase}) == r.checksum);
}

TEST_CASE("upload is windowed and waits for the modeled SD time") {
  Harness h;
  h.camera = MockCaptureBackend(1000, 500);  // ~1.5 MB
  h.register_now();
  h.agent.on_message(texture());
  h.ctx.advance(Micros{50'000});  // exposure
  REQUIRE(h.agent.staged_count() == 1);
  const std::size_t bytes = 1000 * 500 * 3 + std::string("P6\n1000 500\n255\n").size();
  const Micros write{static_cast<std::int64_t>(std::ceil(bytes / 10e6 * 1e6))};
  const Micros read{static_cast<std::int64_t>(std::ceil(bytes / 20e6 * 1e6))};
  h.ctx.backlog = 0;
  h.ctx.advance(write + read - Micros{1});
  CHECK(h.ctx.sent_of<protocol::FrameHeader>().empty());
  h.ctx.advance(Micros{1});
  REQUIRE(h.ctx.sent_of<protocol::FrameHeader>().size() == 1);
  // Header plus chunks up to the window; the rest waits for on_writable.
  const auto chunks = h.ctx.sent_of<protocol::FrameChunk>().size();
  CHECK(chunks >= 1);
  CHECK(chunks <= 5);
  h.drain();
  CHECK(h.ctx.sent_of<protocol::FrameChunk>().size() == (bytes + 65535) / 65536);
  CHECK(h.ctx.sent_of<protocol::FrameComplete>().size() == 1);
}

TEST_CASE("disconnect at half the chunks delivers exactly one copy") {
  Harness h;
  h.camera = MockCaptureBackend(600, 400);  // 720 KB, 11 chunks
  h.register_now();
  Receiver rx;
  h.agent.on_message(texture());
  h.ctx.advance(Micros{1'000'000});
  const auto total = (h.camera.capture({"x", "n01", Phase::Texture, std::nullopt}).bytes.size() + 65535) / 65536;
  REQUIRE(total > 4);
  // Let chunks leave one window at a time until half are out.
  while (h.ctx.sent_of<protocol::FrameChunk>().size() < total / 2) {
    h.ctx.backlog = 0;
    h.agent.on_writable();
  }
  CHECK(h.ctx.sent_of<protocol::FrameComplete>().empty());
  rx.consume(h.ctx);
  h.agent.on_disconnected();
  rx.partial.clear();  // the coordinator drops partial frames with the link
  CHECK(h.agent.staged_count() == 1);

  h.ctx.advance(Micros{2'200'000});
  CHECK(h.ctx.connects == 2);
  h.agent.on_connected();
  h.agent.on_message(protocol::HelloAck{"n01", true, {}});
  for (int i = 0; i < 50; ++i) {
    h.ctx.advance(Micros{20'000});
    h.drain();
    for (const auto& a : rx.consume(h.ctx)) h.agent.on_message(a);
  }
  REQUIRE(rx.complete_copies.size() == 1);
  CHECK(rx.complete_copies.begin()->second == 1);
  CHECK(h.agent.staged_count() == 0);
  REQUIRE(h.agent.receipts().size() == 1);
  CHECK(h.agent.receipts()[0].attempts == 2);
}

TEST_CASE("checksum rejection retries once then reports") {
  Harness h;
  h.register_now();
  Receiver rx;
  h.agent.on_message(texture());
  int rounds = 0;
  for (int i = 0; i < 100; ++i) {
    h.ctx.advance(Micros{20'000});
    h.drain();
    for (const auto& a : rx.consume(h.ctx, true)) {
      ++rounds;
      h.agent.on_message(a);
    }
  }
  CHECK(rounds == 2);
  CHECK(h.ctx.sent_of<protocol::FrameHeader>().size() == 2);
  const auto reports = h.ctx.sent_of<protocol::ErrorReport>();
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].code == "ChecksumMismatch");
  CHECK(h.agent.staged_count() == 0);
  CHECK(h.agent.receipts().empty());

  SUBCASE("a single mismatch is recovered") {
    h.agent.on_message(texture("s0002"));
    bool first = true;
    for (int i = 0; i < 100; ++i) {
      h.ctx.advance(Micros{20'000});
      h.drain();
      for (const auto& a : rx.consume(h.ctx, first)) {
        first = false;
        h.agent.on_message(a);
      }
    }
    REQUIRE(h.agent.receipts().size() == 1);
    CHECK(h.agent.receipts()[0].attempts == 2);
  }
}

TEST_CASE("a new session evicts frames of older sessions") {
  Harness h;
  h.agent.start();  // never registers, so nothing uploads
  h.agent.on_message(texture("s0001"));
  h.ctx.advance(Micros{100'000});
  h.agent.on_message(pattern("s0001"));
  h.ctx.advance(Micros{100'000});
  CHECK(h.agent.staged_count() == 2);
  h.agent.on_message(texture("s0002"));
  h.ctx.advance(Micros{100'000});
  CHECK(h.agent.staged_count() == 1);
}

TEST_CASE("fleet commands report their result") {
  Harness h;
  h.register_now();
  h.agent.on_message(protocol::FleetCommand{"j1", "uname -a", 5000});
  h.agent.on_message(protocol::FleetCommand{"j2", "fail", 5000});
  h.ctx.advance(Micros{1'000'000});
  const auto res = h.ctx.sent_of<protocol::FleetResult>();
  REQUIRE(res.size() == 2);
  CHECK(res[0].job_id == "j1");
  CHECK(res[0].exit_status == 0);
  CHECK(res[0].output.find("uname -a") != std::string::npos);
  CHECK(res[0].duration_ms == 200);
  CHECK(res[1].exit_status == 1);
  CHECK(h.shell.history().size() == 2);
}

TEST_CASE("every capture command gets exactly one ack under random interleavings") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Harness h(config("n07", seed));
    h.register_now();
    SplitMix64 rng(seed);
    int commands = 0;
    for (int step = 0; step < 40; ++step) {
      const auto r = rng.next() % 6;
      if (r == 0) {
        h.agent.on_message(texture("s" + std::to_string(rng.next() % 3)));
        ++commands;
      } else if (r == 1) {
        h.agent.on_message(pattern("s" + std::to_string(rng.next() % 3)));
        ++commands;
      } else if (r == 2 && h.agent.link() == NodeAgent::Link::Registered) {
        h.agent.on_disconnected();
      } else if (r == 3 && h.agent.link() == NodeAgent::Link::Connecting) {
        h.agent.on_connected();
        h.agent.on_message(protocol::HelloAck{"n07", true, {}});
      }
      h.ctx.advance(Micros{static_cast<std::int64_t>(rng.next() % 300'000)});
      h.drain();
    }
    h.ctx.advance(Micros{5'000'000});
    int caps = 0;
    for (const auto& a : h.ctx.sent_of<protocol::CaptureAck>()) caps += a.step == protocol::AckStep::Capture;
    CHECK(caps == commands);
  }
}
