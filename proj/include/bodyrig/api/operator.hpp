#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bodyrig/coordinator/coordinator.hpp"
#include "bodyrig/core/error.hpp"
#include "bodyrig/core/event_log.hpp"
#include "bodyrig/fleet/fleet.hpp"
#include "json.hpp"

namespace bodyrig::api {

// The operator API, independent of HTTP. Every call returns the JSON body
// the HTTP layer sends and throws Error on failure.
class OperatorBackend {
 public:
  virtual ~OperatorBackend() = default;

  virtual nlohmann::json nodes() = 0;
  // {"session_id", "event_seq"}; event_seq is where the session's events start.
  virtual nlohmann::json start_session(const nlohmann::json& body) = 0;
  virtual nlohmann::json session(const std::string& session_id) = 0;
  virtual nlohmann::json set_lights(const nlohmann::json& body) = 0;
  virtual nlohmann::json set_pattern(const nlohmann::json& body) = 0;
  // {"job_id", "event_seq"}
  virtual nlohmann::json start_fleet(const nlohmann::json& body) = 0;
  virtual nlohmann::json fleet(const std::string& job_id) = 0;
  virtual const EventLog& events() const = 0;
};

// Request bodies. Unknown fields are rejected with Error{InvalidArgument}.
// A pattern object may be partial; missing fields come from `base`.
lighting::PatternSpec pattern_from_body(const nlohmann::json& j, const lighting::PatternSpec& base);
coordinator::SessionRequest session_request_from_body(const nlohmann::json& j, const lighting::PatternSpec& base);
lighting::LightLevel light_level_from_body(const nlohmann::json& j);
fleet::FleetJob fleet_job_from_body(const nlohmann::json& j);
nlohmann::json light_report_json(const lighting::LightReport& r);

// Operator API over a Coordinator. `exec` runs its argument wherever the
// coordinator may be touched (its loop thread, or under a lock) and
// returns once it has run.
class CoordinatorBackend : public OperatorBackend {
 public:
  using Exec = std::function<void(const std::function<void()>&)>;

  CoordinatorBackend(coordinator::Coordinator& coord, const EventLog& log, Exec exec);

  nlohmann::json nodes() override;
  nlohmann::json start_session(const nlohmann::json& body) override;
  nlohmann::json session(const std::string& session_id) override;
  nlohmann::json set_lights(const nlohmann::json& body) override;
  nlohmann::json set_pattern(const nlohmann::json& body) override;
  nlohmann::json start_fleet(const nlohmann::json& body) override;
  nlohmann::json fleet(const std::string& job_id) override;
  const EventLog& events() const override { return log_; }

 protected:
  // Called inside exec after the matching operation; the simulator uses
  // these to advance virtual time.
  virtual void after_session(const std::string&) {}
  virtual void after_fleet(const std::string&) {}
  virtual void after_command() {}

 private:
  template <typename F>
  auto run(F&& f) -> decltype(f());

  coordinator::Coordinator& coord_;
  const EventLog& log_;
  Exec exec_;
};

struct Endpoint {
  std::string_view method;
  std::string_view pattern;  // "{id}" marks a path parameter
};

// Every route the operator API serves.
inline constexpr Endpoint kEndpoints[] = {
    {"GET", "/nodes"},  {"POST", "/sessions"}, {"GET", "/sessions/{id}"}, {"POST", "/lights"},
    {"POST", "/pattern"}, {"POST", "/fleet"},  {"GET", "/fleet/{id}"},    {"GET", "/events"},
};

// The table entry a concrete request path matches, if any.
std::optional<Endpoint> match_endpoint(std::string_view method, std::string_view path);

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

int http_status(Errc code) noexcept;
Response error_response(Errc code, const std::string& detail);

// Dispatches one request. GET /events answers with the events already
// logged (`from`, `limit`); live following is the server's job.
Response route(OperatorBackend& backend, const Request& req);

// Query helpers shared with the server's streaming path.
std::uint64_t query_u64(const Request& req, const std::string& key, std::uint64_t fallback);

}  // namespace bodyrig::api
