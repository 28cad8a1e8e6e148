#include "bodyrig/cli/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "bodyrig/api/sim_backend.hpp"
#include "bodyrig/planner/planner.hpp"
#include "bodyrig/sim/cluster.hpp"

namespace bodyrig::cli {

HttpTransport::HttpTransport(const std::string& address) : client_(address) {}

LocalTransport::LocalTransport(std::unique_ptr<api::OperatorBackend> owned)
    : owned_(std::move(owned)), backend_(*owned_) {}

nlohmann::json LocalTransport::call(api::Request req) {
  const auto what = req.method + " " + req.path;
  const api::Response r = api::route(backend_, req);
  const auto body = nlohmann::json::parse(r.body, nullptr, false);
  if (r.status < 200 || r.status >= 300) {
    throw api::ApiError(r.status, body.is_object() ? body.value("error", "HttpError") : "HttpError",
                        body.is_object() ? body.value("detail", "") : r.body);
  }
  if (body.is_discarded()) throw api::ApiError(r.status, "BadResponse", what + " answered with non-JSON");
  return body;
}

nlohmann::json LocalTransport::get(const std::string& path) { return call({"GET", path, {}, {}}); }

nlohmann::json LocalTransport::post(const std::string& path, const nlohmann::json& body) {
  return call({"POST", path, {}, body.dump()});
}

std::uint64_t LocalTransport::events(std::uint64_t from, bool follow,
                                     const std::function<bool(const nlohmann::json&)>& on_event) {
  std::uint64_t next = from;
  for (;;) {
    const api::Response r = api::route(backend_, {"GET", "/events", {{"from", std::to_string(next)}}, {}});
    if (r.status != 200) throw api::ApiError(r.status, "HttpError", r.body);
    std::istringstream in(r.body);
    bool any = false;
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto ev = nlohmann::json::parse(line);
      next = ev.value("seq", next) + 1;
      any = true;
      if (!on_event(ev)) return next;
    }
    if (!follow) return next;
    if (!any) backend_.events().wait_since(next, 1, std::chrono::milliseconds(500));
  }
}

namespace {

struct Usage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Left-aligned columns, two spaces apart.
void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w;
  for (const auto& r : rows) {
    if (w.size() < r.size()) w.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
  }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      line += r[i];
      if (i + 1 < r.size()) line += std::string(w[i] - r[i].size() + 2, ' ');
    }
    out << line << '\n';
  }
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string first_line(const std::string& s, std::size_t max) {
  std::string l = s.substr(0, s.find('\n'));
  if (l.size() > max) l = l.substr(0, max - 3) + "...";
  return l;
}

struct Ctx {
  std::ostream& out;
  std::ostream& err;
  bool json = false;
  std::function<Transport&()> api;

  void emit(const nlohmann::json& j) const { out << j.dump(2) << '\n'; }
};

// Follows the event stream from `from` until an event of `kind` whose
// `key` field equals `id`.
void wait_for(Transport& t, std::uint64_t from, const std::string& kind, const std::string& key, const std::string& id) {
  t.events(from, true, [&](const nlohmann::json& e) {
    if (e.value("kind", "") != kind) return true;
    const auto& d = e.at("data");
    return !(d.contains(key) && d.at(key) == id);
  });
}

// ---- status

int cmd_status(Ctx& c) {
  const auto j = c.api().get("/nodes");
  if (c.json) {
    c.emit(j);
    return kExitOk;
  }
  const int beams = j.at("rig").at("beams");
  const int slots = j.at("rig").at("slots_per_beam");
  std::map<std::pair<int, int>, std::string> cell;
  std::size_t up = 0;
  std::size_t lost = 0;
  for (const auto& n : j.at("nodes")) {
    const bool ok = n.at("state") == "Connected";
    (ok ? up : lost)++;
    cell[{n.at("beam").get<int>(), n.at("slot").get<int>()}] = n.at("node_id").get<std::string>() + (ok ? "" : "!");
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"beam"};
  for (int s = 0; s < slots; ++s) head.push_back("slot" + std::to_string(s));
  rows.push_back(head);
  for (int b = 0; b < beams; ++b) {
    std::vector<std::string> r{std::to_string(b)};
    for (int s = 0; s < slots; ++s) {
      auto it = cell.find({b, s});
      r.push_back(it == cell.end() ? "." : it->second);
    }
    rows.push_back(r);
  }
  print_table(c.out, rows);
  c.out << up << " connected, " << lost << " lost (! marks lost, . an empty slot)";
  if (!j.at("active_session").is_null()) c.out << ", session " << j.at("active_session").get<std::string>() << " active";
  c.out << '\n';
  return kExitOk;
}

// ---- capture

struct CaptureArgs {
  std::optional<std::uint64_t> seed;
  std::optional<double> density;
  bool black = false;
  int light = 100;
};

int cmd_capture(Ctx& c, const CaptureArgs& a) {
  nlohmann::json body{{"light", a.light}};
  nlohmann::json pattern = nlohmann::json::object();
  if (a.black) pattern["kind"] = "black";
  if (a.seed) pattern["seed"] = *a.seed;
  if (a.density) pattern["density"] = *a.density;
  if (!pattern.empty()) body["pattern"] = pattern;
  auto& t = c.api();
  const auto started = t.post("/sessions", body);
  const std::string sid = started.at("session_id");
  wait_for(t, started.at("event_seq"), "session_finished", "session_id", sid);
  const auto rep = t.get("/sessions/" + sid);
  const bool complete = rep.at("state") == "Complete";
  if (c.json) {
    c.emit(rep);
  } else {
    c.out << "session " << sid << ": " << rep.at("state").get<std::string>() << ", " << rep.at("frames").get<std::size_t>()
          << " frames from " << rep.at("expected_nodes").get<std::size_t>() << " nodes";
    if (!rep.at("transfer_seconds").is_null()) c.out << ", transfer " << fixed(rep.at("transfer_seconds"), 2) << " s";
    c.out << '\n';
    if (!rep.at("manifest").get<std::string>().empty()) c.out << "manifest " << rep.at("manifest").get<std::string>() << '\n';
    for (const auto& m : rep.at("missing")) c.out << "missing " << m.dump() << '\n';
  }
  return complete ? kExitOk : kExitPartial;
}

// ---- light, pattern

int cmd_light(Ctx& c, int level) {
  const auto rep = c.api().post("/lights", {{"level", level}});
  const bool ok = rep.at("ok");
  if (c.json) {
    c.emit(rep);
  } else {
    c.out << "lights " << level << "%: " << rep.at("acks").size() << " controllers set";
    for (const auto& f : rep.at("failures")) {
      c.out << "\n  " << f.at("name").get<std::string>() << ": " << f.at("error").get<std::string>();
    }
    c.out << '\n';
  }
  return ok ? kExitOk : kExitPartial;
}

int cmd_pattern(Ctx& c, const std::string& kind, const std::optional<std::uint64_t>& seed,
                const std::optional<double>& density) {
  nlohmann::json body{{"kind", kind}};
  if (seed) body["seed"] = *seed;
  if (density) body["density"] = *density;
  const auto rep = c.api().post("/pattern", body);
  if (c.json) {
    c.emit(rep);
  } else {
    const auto& p = rep.at("pattern");
    c.out << "pattern " << p.at("kind").get<std::string>();
    if (p.at("kind") == "dots") c.out << " seed " << p.at("seed").get<std::uint64_t>() << " density " << p.at("density").get<double>();
    c.out << " " << p.at("width").get<int>() << "x" << p.at("height").get<int>() << '\n';
  }
  return kExitOk;
}

// ---- fleet

struct FleetArgs {
  std::string targets = "all";
  std::size_t limit = 16;
  double timeout = 30;
  std::string out_file;
  std::vector<std::string> command;
};

int cmd_fleet(Ctx& c, const FleetArgs& a) {
  std::string command;
  for (const auto& w : a.command) command += (command.empty() ? "" : " ") + w;
  auto& t = c.api();
  const auto started = t.post("/fleet", {{"command", command}, {"targets", a.targets}, {"limit", a.limit}, {"timeout", a.timeout}});
  const std::string jid = started.at("job_id");
  wait_for(t, started.at("event_seq"), "fleet_finished", "job_id", jid);
  const auto rep = t.get("/fleet/" + jid);
  if (!a.out_file.empty()) {
    std::ofstream f(a.out_file);
    if (!f) throw Error(Errc::Io, "cannot write " + a.out_file);
    f << rep.dump(2) << '\n';
  }
  std::size_t ok = 0;
  for (const auto& r : rep.at("rows")) ok += r.at("status") == "Ok";
  if (c.json) {
    c.emit(rep);
  } else {
    std::vector<std::vector<std::string>> rows{{"node", "status", "exit", "ms", "output"}};
    for (const auto& r : rep.at("rows")) {
      rows.push_back({r.at("node_id"), r.at("status"), r.at("exit_status").is_null() ? "-" : r.at("exit_status").dump(),
                      std::to_string(r.at("duration_ms").get<std::int64_t>()), first_line(r.at("output"), 60)});
    }
    print_table(c.out, rows);
    c.out << "job " << jid << ": " << ok << "/" << rep.at("rows").size() << " ok, peak concurrency "
          << rep.at("peak_concurrency").get<std::size_t>() << '\n';
  }
  return ok == rep.at("rows").size() ? kExitOk : kExitPartial;
}

// ---- plan

int plan_voltage(Ctx& c, const planner::WireSpec& w) {
  const double v = planner::end_voltage(w);
  if (c.json) {
    c.emit({{"length_m", w.length_m}, {"cross_section_mm2", w.cross_section_mm2}, {"current_a", w.current_a},
            {"supply_v", w.supply_v}, {"resistivity_ohm_m", w.resistivity_ohm_m}, {"end_voltage_v", v}});
  } else {
    print_table(c.out, {{"length", fixed(w.length_m, 3), "m"},
                        {"cross section", fixed(w.cross_section_mm2, 3), "mm^2"},
                        {"current", fixed(w.current_a, 3), "A"},
                        {"supply", fixed(w.supply_v, 3), "V"},
                        {"end voltage", fixed(v, 4), "V"}});
  }
  return kExitOk;
}

int plan_maxlen(Ctx& c, const planner::WireSpec& w, const planner::PowerBudget& b) {
  const double len = planner::max_wire_length(w, b);
  if (c.json) {
    c.emit({{"cross_section_mm2", w.cross_section_mm2}, {"current_a", w.current_a}, {"supply_v", w.supply_v},
            {"min_operating_v", b.min_operating_v}, {"max_length_m", len}});
  } else {
    print_table(c.out, {{"supply", fixed(w.supply_v, 3), "V"},
                        {"floor", fixed(b.min_operating_v, 3), "V"},
                        {"max length", fixed(len, 4), "m"}});
  }
  return kExitOk;
}

int plan_geometry(Ctx& c, const planner::RigPlan& r) {
  const auto pts = planner::beam_positions(r);
  const double min = planner::rig_min_angle(r);
  const auto angles = planner::adjacent_angles(pts, {0, 0});
  const bool meets = min >= r.min_angle_threshold_deg;
  if (c.json) {
    nlohmann::json p = nlohmann::json::array();
    for (const auto& q : pts) p.push_back({q.x, q.y});
    c.emit({{"beams", pts.size()}, {"cameras", r.camera_count()}, {"perimeter_m", r.perimeter_m()}, {"points", p},
            {"adjacent_angles_deg", angles}, {"min_angle_deg", min}, {"threshold_deg", r.min_angle_threshold_deg},
            {"meets_threshold", meets}});
  } else {
    std::vector<std::vector<std::string>> rows{{"beam", "x", "y"}};
    for (std::size_t i = 0; i < pts.size(); ++i) rows.push_back({std::to_string(i), fixed(pts[i].x, 3), fixed(pts[i].y, 3)});
    print_table(c.out, rows);
    c.out << "min adjacent angle " << fixed(min, 2) << " deg (threshold " << fixed(r.min_angle_threshold_deg, 1)
          << ", " << (meets ? "met" : "not met") << ")\n";
  }
  return kExitOk;
}

int plan_transfer(Ctx& c, const planner::TransferModel& t) {
  const auto w = planner::transfer_time_window(t);
  if (c.json) {
    c.emit({{"node_count", t.node_count}, {"images_per_node", t.images_per_node}, {"bytes_per_image", t.bytes_per_image},
            {"nic_bandwidth", t.nic_bandwidth}, {"sd_read_rate", t.sd_read_rate}, {"fixed_overhead_s", t.fixed_overhead_s},
            {"total_bytes", t.total_bytes()}, {"lower_s", w.lower_s}, {"upper_s", w.upper_s}});
  } else {
    print_table(c.out, {{"total", fixed(t.total_bytes() / 1e6, 1), "MB"},
                        {"lower", fixed(w.lower_s, 3), "s"},
                        {"upper", fixed(w.upper_s, 3), "s"}});
  }
  return kExitOk;
}

// ---- sim

struct SimArgs {
  std::string spec_file;
  std::string scenario_file;
  std::optional<std::size_t> nodes;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "sim-out";
  std::string report_file;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Usage("cannot read " + path);
  auto j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw Usage(path + " is not valid JSON");
  return j;
}

int cmd_sim(Ctx& c, const SimArgs& a) {
  sim::ClusterSpec spec;
  sim::Scenario scenario{sim::Action{}};
  try {
    if (!a.spec_file.empty()) spec = sim::ClusterSpec::from_json(read_json(a.spec_file));
    if (a.nodes) spec.node_count = *a.nodes;
    if (a.seed) spec.seed = *a.seed;
    spec.validate();
    if (!a.scenario_file.empty()) scenario = sim::scenario_from_json(read_json(a.scenario_file));
  } catch (const Error& e) {
    throw Usage(e.what());
  }
  const auto rep = sim::run_cluster(spec, scenario, a.out_dir);
  const auto j = rep.to_json();
  if (!a.report_file.empty()) {
    std::ofstream f(a.report_file);
    if (!f) throw Error(Errc::Io, "cannot write " + a.report_file);
    f << j.dump(2) << '\n';
  }
  bool ok = true;
  for (const auto& s : rep.sessions) ok = ok && s.state == coordinator::SessionState::Complete;
  for (const auto& f : rep.fleet_jobs) {
    for (const auto& r : f.rows) ok = ok && r.status == fleet::RowStatus::Ok;
  }
  if (c.json) {
    c.emit(j);
  } else {
    c.out << spec.node_count << " nodes, seed " << spec.seed << ", virtual " << fixed(rep.virtual_duration, 3) << " s, "
          << rep.events.size() << " events\n";
    std::vector<std::vector<std::string>> rows{{"session", "state", "frames", "transfer s"}};
    for (const auto& s : rep.sessions) {
      const auto t = s.transfer_seconds();
      rows.push_back({s.session_id, std::string(coordinator::to_string(s.state)), std::to_string(s.frames()),
                      t ? fixed(*t, 3) : "-"});
    }
    if (rows.size() > 1) print_table(c.out, rows);
    for (const auto& f : rep.fleet_jobs) {
      std::size_t good = 0;
      for (const auto& r : f.rows) good += r.status == fleet::RowStatus::Ok;
      c.out << "fleet " << f.job_id << ": " << good << "/" << f.rows.size() << " ok, peak " << f.peak_concurrency << '\n';
    }
  }
  return ok ? kExitOk : kExitPartial;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err, const Connector& connect) {
  CLI::App app{"Operator client for the capture rig coordinator.", argv.empty() ? "rigctl" : argv.front()};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every verb");
  app.footer(std::string("Environment:\n  ") + kAddressEnv + "  coordinator address (default " + kDefaultAddress + ")\n"
             "Exit status: 0 ok, 2 usage, 3 coordinator unreachable, 4 partial failure, 5 API error");

  Ctx c{out, err, false, {}};
  std::string address;
  std::size_t sim_nodes = 0;
  std::string sim_store = "captures";
  app.add_flag("--json", c.json, "Print the result as JSON");
  app.add_option("--coordinator", address, std::string("Coordinator address host:port (overrides ") + kAddressEnv + ")");
  app.add_option("--sim-nodes", sim_nodes, "Answer from an in-process simulated cluster of this many nodes")
      ->check(CLI::Range(1, 96));
  app.add_option("--sim-store", sim_store, "Capture directory of the simulated cluster")->capture_default_str();

  auto* status = app.add_subcommand("status", "Show connected nodes as a beam x slot grid");

  CaptureArgs cap;
  auto* capture = app.add_subcommand("capture", "Run one capture session and wait for it to finish");
  capture->add_option("--seed", cap.seed, "Dot pattern seed (default: the coordinator's pattern)");
  capture->add_option("--density", cap.density, "Dot density in (0, 1)");
  capture->add_flag("--black", cap.black, "Project black instead of dots");
  capture->add_option("--light", cap.light, "Light level")->check(CLI::IsMember({0, 50, 100}))->capture_default_str();

  int level = 0;
  auto* light = app.add_subcommand("light", "Set every LED stripe to 0, 50 or 100 percent");
  light->add_option("level", level, "Light level")->required()->check(CLI::IsMember({0, 50, 100}));

  std::string kind;
  std::optional<std::uint64_t> pseed;
  std::optional<double> pdensity;
  auto* pattern = app.add_subcommand("pattern", "Show a pattern on the projectors and make it the capture default");
  pattern->add_option("kind", kind, "Pattern kind")->required()->check(CLI::IsMember({"dots", "black"}));
  pattern->add_option("--seed", pseed, "Dot pattern seed");
  pattern->add_option("--density", pdensity, "Dot density in (0, 1)");

  FleetArgs fa;
  auto* fleet = app.add_subcommand("fleet", "Maintenance commands on many nodes");
  fleet->require_subcommand(1);
  auto* fleet_run = fleet->add_subcommand("run", "Run a shell command on the selected nodes");
  fleet_run->add_option("--targets", fa.targets, "all, beams:A-B or node ids separated by commas")->capture_default_str();
  fleet_run->add_option("--limit", fa.limit, "Concurrent executions")->check(CLI::PositiveNumber)->capture_default_str();
  fleet_run->add_option("--timeout", fa.timeout, "Per-node timeout in seconds")->check(CLI::PositiveNumber)->capture_default_str();
  fleet_run->add_option("--out", fa.out_file, "Also write the report as JSON to this file");
  fleet_run->add_option("command", fa.command, "Command, after --")->required();

  auto* plan = app.add_subcommand("plan", "Rig planning calculators (local, no coordinator)");
  plan->require_subcommand(1);
  planner::WireSpec wire;
  planner::PowerBudget budget;
  auto wire_opts = [&](CLI::App* s) {
    s->add_option("--length", wire.length_m, "Wire length in m (one way)")->capture_default_str();
    s->add_option("--area", wire.cross_section_mm2, "Conductor cross section in mm^2")->capture_default_str();
    s->add_option("--current", wire.current_a, "Current in A")->capture_default_str();
    s->add_option("--supply", wire.supply_v, "Supply voltage")->capture_default_str();
    s->add_option("--resistivity", wire.resistivity_ohm_m, "Resistivity in ohm*m")->capture_default_str();
  };
  auto* voltage = plan->add_subcommand("voltage", "Voltage at the end of a power wire");
  wire_opts(voltage);
  auto* maxlen = plan->add_subcommand("maxlen", "Longest wire that keeps the voltage above the floor");
  wire_opts(maxlen);
  maxlen->add_option("--min-voltage", budget.min_operating_v, "Minimum operating voltage")->capture_default_str();
  planner::RigPlan rig;
  auto* geometry = plan->add_subcommand("geometry", "Beam positions and the minimum angle between cameras");
  geometry->add_option("--width", rig.width_m, "Frame width in m")->capture_default_str();
  geometry->add_option("--depth", rig.depth_m, "Frame depth in m")->capture_default_str();
  geometry->add_option("--beams", rig.beams, "Number of beams")->check(CLI::Range(3, 1000))->capture_default_str();
  geometry->add_option("--gap", rig.entrance_gap_slots, "Beam slots left out at the entrance")->capture_default_str();
  geometry->add_option("--threshold", rig.min_angle_threshold_deg, "Required minimum angle in degrees")->capture_default_str();
  planner::TransferModel tm;
  auto* transfer = plan->add_subcommand("transfer", "Time window for moving one capture set to the server");
  transfer->add_option("--nodes", tm.node_count, "Camera nodes")->capture_default_str();
  transfer->add_option("--images", tm.images_per_node, "Images per node")->capture_default_str();
  transfer->add_option("--bytes", tm.bytes_per_image, "Bytes per image")->capture_default_str();
  transfer->add_option("--nic", tm.nic_bandwidth, "Server NIC bytes/s")->capture_default_str();
  transfer->add_option("--sd", tm.sd_read_rate, "SD card read bytes/s")->capture_default_str();
  transfer->add_option("--overhead", tm.fixed_overhead_s, "Fixed overhead in s")->capture_default_str();

  SimArgs sa;
  auto* simc = app.add_subcommand("sim", "Deterministic cluster simulation");
  simc->require_subcommand(1);
  auto* sim_run = simc->add_subcommand("run", "Run a scenario (default: one capture) on a simulated cluster");
  sim_run->add_option("--spec", sa.spec_file, "Cluster spec JSON");
  sim_run->add_option("--scenario", sa.scenario_file, "Scenario JSON");
  sim_run->add_option("--nodes", sa.nodes, "Override the node count");
  sim_run->add_option("--seed", sa.seed, "Override the seed");
  sim_run->add_option("--out", sa.out_dir, "Capture directory")->capture_default_str();
  sim_run->add_option("--report", sa.report_file, "Write the full report JSON here");

  std::vector<const char*> raw;
  raw.reserve(argv.size() + 1);
  if (argv.empty()) raw.push_back("rigctl");
  for (const auto& a : argv) raw.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  std::unique_ptr<Transport> transport;
  c.api = [&]() -> Transport& {
    if (!transport) {
      if (sim_nodes > 0) {
        sim::ClusterSpec spec;
        spec.node_count = sim_nodes;
        transport = std::make_unique<LocalTransport>(std::make_unique<api::SimBackend>(spec, sim_store));
      } else {
        std::string addr = address;
        if (addr.empty()) {
          const char* env = std::getenv(kAddressEnv);
          addr = env && *env ? env : kDefaultAddress;
        }
        transport = connect ? connect(addr) : std::make_unique<HttpTransport>(addr);
      }
    }
    return *transport;
  };

  auto fail = [&](int code, const std::string& kind, const std::string& detail, int status = 0) {
    err << "rigctl: " << kind << ": " << detail << '\n';
    if (c.json) {
      nlohmann::json j{{"error", kind}, {"detail", detail}};
      if (status) j["status"] = status;
      c.emit(j);
    }
    return code;
  };

  try {
    if (status->parsed()) return cmd_status(c);
    if (capture->parsed()) return cmd_capture(c, cap);
    if (light->parsed()) return cmd_light(c, level);
    if (pattern->parsed()) return cmd_pattern(c, kind, pseed, pdensity);
    if (fleet_run->parsed()) return cmd_fleet(c, fa);
    if (voltage->parsed()) return plan_voltage(c, wire);
    if (maxlen->parsed()) return plan_maxlen(c, wire, budget);
    if (geometry->parsed()) return plan_geometry(c, rig);
    if (transfer->parsed()) return plan_transfer(c, tm);
    if (sim_run->parsed()) return cmd_sim(c, sa);
    return fail(kExitUsage, "Usage", "no verb");
  } catch (const Usage& e) {
    return fail(kExitUsage, "Usage", e.what());
  } catch (const api::Unreachable& e) {
    return fail(kExitUnreachable, "Unreachable", e.what());
  } catch (const api::ApiError& e) {
    return fail(kExitApiError, e.code(), e.detail(), e.status());
  } catch (const Error& e) {
    // Local computations: bad inputs are usage errors, the rest API-like.
    const bool usage = e.code() == Errc::InvalidArgument || e.code() == Errc::InfeasibleBudget ||
                       e.code() == Errc::DegenerateCenter;
    return fail(usage ? kExitUsage : kExitApiError, std::string(to_string(e.code())), e.what());
  } catch (const std::exception& e) {
    return fail(kExitApiError, "Internal", e.what());
  }
}

}  // namespace bodyrig::cli
