// Camera node agent. --count runs several mock nodes in one process, which
// is how a desk setup stands in for the rig.
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "bodyrig/net/runtime.hpp"
#include "signals.hpp"

using namespace bodyrig;

namespace {

struct Node {
  std::unique_ptr<agent::CaptureBackend> camera;
  std::unique_ptr<agent::CommandBackend> shell;
  std::unique_ptr<lighting::RecordingProjector> projector;
  std::unique_ptr<net::AgentHost> host;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capture rig camera node agent.", "rig-agent"};
  std::string coordinator = "127.0.0.1:7100";
  std::string node_id;
  int beam = 0;
  int slot = 0;
  int count = 1;
  int slots_per_beam = 4;
  std::uint32_t width = 1000;
  std::uint32_t height = 666;
  std::string capture_cmd;
  std::string scratch = "/tmp";
  bool allow_shell = false;
  bool projector = false;
  std::uint64_t seed = 1;
  bool verbose = false;
  app.add_option("--coordinator", coordinator, "Coordinator agent port host:port")->capture_default_str();
  app.add_option("--node-id", node_id, "Node id (default nBB derived from the position)");
  app.add_option("--beam", beam, "Beam index")->capture_default_str();
  app.add_option("--slot", slot, "Slot on the beam")->capture_default_str();
  app.add_option("--count", count, "Run this many mock nodes, positions counting up from beam/slot")
      ->check(CLI::Range(1, 96))->capture_default_str();
  app.add_option("--slots-per-beam", slots_per_beam, "Slots per beam when counting positions")->capture_default_str();
  app.add_option("--width", width, "Mock frame width")->capture_default_str();
  app.add_option("--height", height, "Mock frame height")->capture_default_str();
  app.add_option("--capture-cmd", capture_cmd, "Real capture program; {out}, {width}, {height} are substituted");
  app.add_option("--scratch", scratch, "Scratch directory for --capture-cmd")->capture_default_str();
  app.add_flag("--allow-shell", allow_shell, "Run fleet commands through /bin/sh (otherwise they are echoed)");
  app.add_flag("--projector", projector, "This host drives a projector (default: slot 0)");
  app.add_option("--seed", seed, "Reconnect jitter seed")->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "Print agent events to stderr");
  CLI11_PARSE(app, argc, argv);
  if (count > 1 && !node_id.empty()) {
    std::cerr << "rig-agent: --node-id needs --count 1\n";
    return 2;
  }

  block_stop_signals();
  try {
    net::EventLoop loop;
    EventLog log;
    if (verbose) log.set_listener([](const LogEvent& e) { std::cerr << e.to_json().dump() << '\n'; });
    std::vector<std::unique_ptr<Node>> nodes;
    const int first = beam * slots_per_beam + slot;
    for (int i = 0; i < count; ++i) {
      auto n = std::make_unique<Node>();
      agent::AgentConfig cfg;
      cfg.beam = (first + i) / slots_per_beam;
      cfg.slot = (first + i) % slots_per_beam;
      if (node_id.empty() || count > 1) {
        std::ostringstream id;
        id << 'n' << std::setw(2) << std::setfill('0') << first + i;
        cfg.node_id = id.str();
      } else {
        cfg.node_id = node_id;
      }
      cfg.coordinator_addr = coordinator;
      cfg.rng_seed = seed + static_cast<std::uint64_t>(i);
      cfg.validate();
      if (capture_cmd.empty()) {
        n->camera = std::make_unique<agent::MockCaptureBackend>(width, height);
      } else {
        n->camera = std::make_unique<agent::ExternalCaptureBackend>(capture_cmd, scratch, width, height);
      }
      if (allow_shell) {
        n->shell = std::make_unique<agent::ShellCommandBackend>();
      } else {
        n->shell = std::make_unique<agent::MockCommandBackend>();
      }
      if (projector || cfg.slot == 0) n->projector = std::make_unique<lighting::RecordingProjector>();
      n->host = std::make_unique<net::AgentHost>(loop, cfg,
                                                 agent::AgentBackends{n->camera.get(), n->shell.get(), n->projector.get()},
                                                 &log);
      n->host->start();
      nodes.push_back(std::move(n));
    }
    std::cerr << "rig-agent: " << count << " node(s) dialing " << coordinator << '\n';
    std::thread waiter([&] {
      wait_for_signal();
      loop.stop();
    });
    loop.run();
    waiter.join();
  } catch (const std::exception& e) {
    std::cerr << "rig-agent: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
