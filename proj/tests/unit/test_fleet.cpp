#include <random>

#include "bodyrig/core/error.hpp"
#include "bodyrig/fleet/fleet.hpp"
#include "doctest.h"

using namespace bodyrig;
using namespace bodyrig::fleet;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Io;  // nothing thrown
}

std::vector<coordinator::NodeRecord> rig(int beams, int slots) {
  std::vector<coordinator::NodeRecord> out;
  for (int b = 0; b < beams; ++b) {
    for (int s = 0; s < slots; ++s) {
      coordinator::NodeRecord r;
      char id[8];
      std::snprintf(id, sizeof id, "n%02d", b * slots + s + 1);
      r.node_id = id;
      r.beam = b;
      r.slot = s;
      out.push_back(r);
    }
  }
  return out;
}

FleetJob job(std::size_t limit) {
  FleetJob j;
  j.job_id = "j0001";
  j.command = "echo hi";
  j.concurrency_limit = limit;
  return j;
}

}  // namespace

TEST_CASE("target selector parsing") {
  CHECK(TargetSelector::parse("all").kind == TargetSelector::Kind::All);
  const auto r = TargetSelector::parse("beams:3-5");
  CHECK(r.kind == TargetSelector::Kind::BeamRange);
  CHECK(r.beam_lo == 3);
  CHECK(r.beam_hi == 5);
  CHECK(TargetSelector::parse("beams:7").beam_hi == 7);
  const auto l = TargetSelector::parse("n03,n01,n03");
  CHECK(l.ids == std::vector<std::string>{"n01", "n03"});
  for (const char* text : {"all", "beams:0-23", "beams:4-4", "n01,n02"}) {
    CHECK(TargetSelector::parse(TargetSelector::parse(text).to_string()) == TargetSelector::parse(text));
  }
  for (const char* bad : {"", "n01,,n02", ",", "beams:", "beams:5-3", "beams:-1", "beams:a-b", "beams:1-"}) {
    CAPTURE(bad);
    CHECK(code_of([&] { TargetSelector::parse(bad); }) == Errc::InvalidArgument);
  }
}

TEST_CASE("resolve against a registry") {
  const auto nodes = rig(24, 4);
  CHECK(resolve(TargetSelector::parse("all"), nodes).size() == 96);
  const auto b = resolve(TargetSelector::parse("beams:0-1"), nodes);
  CHECK(b == std::vector<std::string>{"n01", "n02", "n03", "n04", "n05", "n06", "n07", "n08"});
  // unknown ids are kept so they can report Unreachable
  CHECK(resolve(TargetSelector::parse("n99,n01"), nodes) == std::vector<std::string>{"n01", "n99"});
  CHECK(code_of([&] { resolve(TargetSelector::parse("beams:30-31"), nodes); }) == Errc::EmptySelection);
  CHECK(code_of([&] { resolve(TargetSelector::parse("all"), {}); }) == Errc::EmptySelection);
}

TEST_CASE("job validation") {
  CHECK(code_of([] { job(0).validate(); }) == Errc::InvalidArgument);
  auto j = job(4);
  j.command.clear();
  CHECK(code_of([&] { j.validate(); }) == Errc::InvalidArgument);
  j = job(4);
  j.per_node_timeout = Micros{0};
  CHECK(code_of([&] { j.validate(); }) == Errc::InvalidArgument);
  CHECK(code_of([] { FleetRun(job(2), {}); }) == Errc::EmptySelection);
}

TEST_CASE("random completion orders never exceed the limit") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const std::size_t limit = 1 + rng() % 10;
    std::vector<std::string> targets;
    for (std::size_t i = 0; i < n; ++i) targets.push_back("n" + std::to_string(100 + i));
    FleetRun run(job(limit), targets);
    std::vector<std::string> running;
    std::size_t reported = 0;
    while (!run.done()) {
      for (auto& id : run.launch()) running.push_back(id);
      REQUIRE(run.running() <= limit);
      REQUIRE(running.size() == run.running());
      if (running.empty()) {
        // only skipped nodes can be left; mark one unreachable
        break;
      }
      const std::size_t k = rng() % running.size();
      const std::string id = running[k];
      running.erase(running.begin() + static_cast<std::ptrdiff_t>(k));
      switch (rng() % 4) {
        case 0:
          CHECK(run.on_timeout(id));
          break;
        case 1:
          CHECK(run.on_unreachable(id));
          break;
        default:
          CHECK(run.on_result(id, static_cast<int>(rng() % 2), "x", 3));
      }
      ++reported;
      // a duplicate report changes nothing
      CHECK_FALSE(run.on_result(id, 0, "late", 1));
    }
    CHECK(run.done());
    CHECK(reported == n);
    CHECK(run.peak() == std::min(n, limit));
    const auto rep = run.report();
    CHECK(rep.rows.size() == n);
    CHECK(std::is_sorted(rep.rows.begin(), rep.rows.end(),
                         [](const FleetRow& a, const FleetRow& b) { return a.node_id < b.node_id; }));
  }
}

TEST_CASE("unreachable before launch is skipped") {
  FleetRun run(job(1), {"a", "b", "c"});
  CHECK(run.launch() == std::vector<std::string>{"a"});
  CHECK(run.on_unreachable("c"));
  CHECK_FALSE(run.on_unreachable("c"));
  CHECK_FALSE(run.on_unreachable("zz"));
  CHECK(run.on_result("a", 0, "", 1));
  CHECK(run.launch() == std::vector<std::string>{"b"});
  CHECK(run.on_result("b", 2, "bad", 1));
  CHECK(run.launch().empty());
  CHECK(run.done());
  const auto rep = run.report();
  CHECK(rep.rows[1].status == RowStatus::Failed);
  CHECK(rep.rows[2].status == RowStatus::Unreachable);
}

TEST_CASE("report json round-trip") {
  FleetReport r;
  r.job_id = "j0003";
  r.command = "uname -a";
  r.done = true;
  r.peak_concurrency = 2;
  r.rows = {{"n01", RowStatus::Ok, 0, "Linux", 12},
            {"n02", RowStatus::Timeout, std::nullopt, "", 30000},
            {"n03", RowStatus::Unreachable, std::nullopt, "", 0},
            {"n04", RowStatus::Failed, 127, "not found", 4}};
  const auto back = FleetReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  CHECK(back.rows == r.rows);
  CHECK(back.to_json() == r.to_json());
}

TEST_CASE("peak concurrency sweep over the log") {
  auto ev = [](std::int64_t t, const char* kind, const char* job, const char* node) {
    return LogEvent{0, Micros{t}, "coordinator", kind, {{"job_id", job}, {"node_id", node}}};
  };
  std::vector<LogEvent> log = {
      ev(0, "fleet_exec_start", "j1", "a"), ev(1, "fleet_exec_start", "j1", "b"),
      ev(1, "fleet_exec_start", "j2", "x"),  // other job
      ev(2, "fleet_exec_end", "j1", "a"),   ev(2, "fleet_exec_start", "j1", "c"),
      ev(3, "fleet_exec_start", "j1", "d"), ev(4, "fleet_exec_end", "j1", "b"),
  };
  CHECK(peak_concurrency(log, "j1") == 3);
  CHECK(peak_concurrency(log, "j2") == 1);
  CHECK(peak_concurrency(log, "j9") == 0);
}
