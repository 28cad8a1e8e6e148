#include "bodyrig/api/operator.hpp"

#include <charconv>
#include <set>

#include "bodyrig/protocol/codec.hpp"

namespace bodyrig::api {

namespace {

void only_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys, std::string_view what) {
  if (!j.is_object()) throw Error(Errc::InvalidArgument, std::string(what) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto key : keys) ok = ok || key == k;
    if (!ok) throw Error(Errc::InvalidArgument, "unknown field in " + std::string(what) + ": " + k);
  }
}

// nlohmann type errors become InvalidArgument.
template <typename F>
auto parsing(std::string_view what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, "bad " + std::string(what) + ": " + e.what());
  }
}

std::string strip_code(const Error& e) {
  const std::string w = e.what();
  const std::string prefix = std::string(to_string(e.code())) + ": ";
  return w.rfind(prefix, 0) == 0 ? w.substr(prefix.size()) : w;
}

}  // namespace

lighting::PatternSpec pattern_from_body(const nlohmann::json& j, const lighting::PatternSpec& base) {
  only_keys(j, {"kind", "seed", "density", "width", "height"}, "pattern");
  nlohmann::json merged = protocol::pattern_to_json(base);
  merged.update(j);
  lighting::PatternSpec p;
  try {
    p = protocol::pattern_from_json(merged);
  } catch (const Error& e) {
    throw Error(Errc::InvalidArgument, strip_code(e));
  }
  if (!p.valid()) throw Error(Errc::InvalidArgument, "pattern needs a non-empty size and density in (0,1)");
  return p;
}

lighting::LightLevel light_level_from_body(const nlohmann::json& j) {
  only_keys(j, {"level"}, "light request");
  const int v = parsing("light level", [&] { return j.at("level").get<int>(); });
  const auto level = lighting::light_level_from_percent(v);
  if (!level) throw Error(Errc::InvalidArgument, "light level must be one of 0, 50, 100");
  return *level;
}

coordinator::SessionRequest session_request_from_body(const nlohmann::json& j, const lighting::PatternSpec& base) {
  const nlohmann::json body = j.is_null() ? nlohmann::json::object() : j;
  only_keys(body, {"pattern", "light"}, "session request");
  coordinator::SessionRequest req;
  if (body.contains("pattern")) req.pattern = pattern_from_body(body.at("pattern"), base);
  if (body.contains("light")) req.light = light_level_from_body({{"level", body.at("light")}});
  return req;
}

fleet::FleetJob fleet_job_from_body(const nlohmann::json& j) {
  only_keys(j, {"command", "targets", "limit", "timeout"}, "fleet request");
  fleet::FleetJob job;
  parsing("fleet request", [&] {
    job.command = j.at("command").get<std::string>();
    job.targets = fleet::TargetSelector::parse(j.value("targets", std::string("all")));
    const auto limit = j.value("limit", static_cast<std::int64_t>(fleet::kDefaultConcurrency));
    if (limit < 1) throw Error(Errc::InvalidArgument, "limit must be at least 1");
    job.concurrency_limit = static_cast<std::size_t>(limit);
    job.per_node_timeout = from_seconds(j.value("timeout", to_seconds(job.per_node_timeout)));
    return 0;
  });
  job.validate();
  return job;
}

nlohmann::json light_report_json(const lighting::LightReport& r) {
  nlohmann::json acks = nlohmann::json::array();
  for (const auto& a : r.acks) {
    acks.push_back({{"controller", a.controller}, {"name", a.name}, {"level", lighting::percent(a.level)},
                    {"changed", a.changed}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"controller", f.controller}, {"name", f.name}, {"error", to_string(f.code)}});
  }
  return {{"level", lighting::percent(r.level)}, {"ok", r.ok()}, {"acks", acks}, {"failures", failures}};
}

CoordinatorBackend::CoordinatorBackend(coordinator::Coordinator& coord, const EventLog& log, Exec exec)
    : coord_(coord), log_(log), exec_(std::move(exec)) {}

template <typename F>
auto CoordinatorBackend::run(F&& f) -> decltype(f()) {
  std::optional<decltype(f())> out;
  std::exception_ptr err;
  exec_([&] {
    try {
      out.emplace(f());
    } catch (...) {
      err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
  if (!out) throw Error(Errc::Io, "coordinator loop is not running");
  return std::move(*out);
}

nlohmann::json CoordinatorBackend::nodes() {
  return run([&] { return coord_.nodes_json(); });
}

nlohmann::json CoordinatorBackend::start_session(const nlohmann::json& body) {
  return run([&] {
    const auto req = session_request_from_body(body, coord_.default_pattern());
    const std::uint64_t seq = log_.next_seq();
    const std::string id = coord_.start_session(req);
    after_session(id);
    return nlohmann::json{{"session_id", id}, {"event_seq", seq}};
  });
}

nlohmann::json CoordinatorBackend::session(const std::string& session_id) {
  return run([&] { return coord_.session_json(session_id); });
}

nlohmann::json CoordinatorBackend::set_lights(const nlohmann::json& body) {
  return run([&] {
    const auto level = light_level_from_body(body);
    const auto rep = coord_.set_lights(level);
    after_command();
    return light_report_json(rep);
  });
}

nlohmann::json CoordinatorBackend::set_pattern(const nlohmann::json& body) {
  return run([&] {
    const auto p = pattern_from_body(body, coord_.default_pattern());
    coord_.set_pattern(p);
    after_command();
    return nlohmann::json{{"pattern", protocol::pattern_to_json(p)}};
  });
}

nlohmann::json CoordinatorBackend::start_fleet(const nlohmann::json& body) {
  return run([&] {
    const auto job = fleet_job_from_body(body);
    const std::uint64_t seq = log_.next_seq();
    const std::string id = coord_.start_fleet(job);
    after_fleet(id);
    return nlohmann::json{{"job_id", id}, {"event_seq", seq}};
  });
}

nlohmann::json CoordinatorBackend::fleet(const std::string& job_id) {
  return run([&] { return coord_.fleet_report(job_id).to_json(); });
}

std::optional<Endpoint> match_endpoint(std::string_view method, std::string_view path) {
  auto segments = [](std::string_view p) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < p.size()) {
      if (p[i] == '/') {
        ++i;
        continue;
      }
      const auto j = p.find('/', i);
      out.push_back(p.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i));
      if (j == std::string_view::npos) break;
      i = j;
    }
    return out;
  };
  const auto have = segments(path);
  for (const Endpoint& e : kEndpoints) {
    if (e.method != method) continue;
    const auto want = segments(e.pattern);
    if (want.size() != have.size()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < want.size() && ok; ++i) {
      ok = want[i] == "{id}" ? !have[i].empty() : want[i] == have[i];
    }
    if (ok) return e;
  }
  return std::nullopt;
}

int http_status(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument:
    case Errc::MalformedBody:
    case Errc::IllegalEvent:
      return 400;
    case Errc::NotFound:
    case Errc::UnknownNode:
      return 404;
    case Errc::SessionActive:
      return 409;
    case Errc::EmptySelection:
    case Errc::InfeasibleBudget:
      return 422;
    case Errc::ControllerUnreachable:
      return 502;
    default:
      return 500;
  }
}

Response error_response(Errc code, const std::string& detail) {
  return {http_status(code), "application/json",
          nlohmann::json{{"error", to_string(code)}, {"detail", detail}}.dump()};
}

std::uint64_t query_u64(const Request& req, const std::string& key, std::uint64_t fallback) {
  auto it = req.query.find(key);
  if (it == req.query.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(Errc::InvalidArgument, "query parameter " + key + " must be a non-negative integer");
  }
  return v;
}

Response route(OperatorBackend& backend, const Request& req) {
  const auto ep = match_endpoint(req.method, req.path);
  if (!ep) {
    for (const Endpoint& e : kEndpoints) {
      if (match_endpoint(e.method, req.path) && e.method != req.method) {
        return {405, "application/json", nlohmann::json{{"error", "MethodNotAllowed"}, {"detail", req.path}}.dump()};
      }
    }
    return error_response(Errc::NotFound, "no route " + req.method + " " + req.path);
  }
  auto body = [&] {
    if (req.body.empty()) return nlohmann::json(nullptr);
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidArgument, std::string("request body is not JSON: ") + e.what());
    }
  };
  auto tail = [&] { return req.path.substr(req.path.rfind('/') + 1); };
  try {
    const std::string_view p = ep->pattern;
    nlohmann::json out;
    int status = 200;
    if (p == "/nodes") {
      out = backend.nodes();
    } else if (p == "/sessions") {
      out = backend.start_session(body());
      status = 201;
    } else if (p == "/sessions/{id}") {
      out = backend.session(tail());
    } else if (p == "/lights") {
      out = backend.set_lights(body());
    } else if (p == "/pattern") {
      out = backend.set_pattern(body());
    } else if (p == "/fleet") {
      out = backend.start_fleet(body());
      status = 201;
    } else if (p == "/fleet/{id}") {
      out = backend.fleet(tail());
    } else {  // /events
      const auto from = query_u64(req, "from", 0);
      const auto limit = query_u64(req, "limit", SIZE_MAX);
      std::string lines;
      for (const auto& e : backend.events().since(from, static_cast<std::size_t>(limit))) {
        lines += e.to_json().dump();
        lines += '\n';
      }
      return {200, "application/x-ndjson", std::move(lines)};
    }
    return {status, "application/json", out.dump()};
  } catch (const Error& e) {
    return error_response(e.code(), strip_code(e));
  } catch (const std::exception& e) {
    return error_response(Errc::Io, e.what());
  }
}

}  // namespace bodyrig::api
