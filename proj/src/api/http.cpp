#include "bodyrig/api/http.hpp"

#include "httplib.h"

namespace bodyrig::api {

namespace {

// Keeps idle /events streams from tripping client read timeouts.
constexpr auto kKeepalive = std::chrono::seconds(5);
constexpr auto kPoll = std::chrono::milliseconds(200);

Request to_request(const httplib::Request& r) {
  Request out;
  out.method = r.method;
  out.path = r.path;
  for (const auto& [k, v] : r.params) out.query[k] = v;
  out.body = r.body;
  return out;
}

}  // namespace

struct ApiServer::Impl {
  OperatorBackend& backend;
  httplib::Server srv;
  std::atomic<bool> stopping{false};

  explicit Impl(OperatorBackend& b) : backend(b) {}

  void handle(const httplib::Request& hr, httplib::Response& res) {
    const Request req = to_request(hr);
    if (req.method == "GET" && req.path == "/events") {
      auto f = req.query.find("follow");
      if (f == req.query.end() || (f->second != "0" && f->second != "false")) {
        follow(req, res);
        return;
      }
    }
    const Response r = route(backend, req);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  }

  void follow(const Request& req, httplib::Response& res) {
    std::uint64_t from = 0;
    std::uint64_t limit = 0;
    try {
      from = query_u64(req, "from", 0);
      limit = query_u64(req, "limit", UINT64_MAX);
    } catch (const Error& e) {
      const Response r = error_response(e.code(), e.what());
      res.status = r.status;
      res.set_content(r.body, r.content_type);
      return;
    }
    struct State {
      std::uint64_t next;
      std::uint64_t left;
      std::chrono::steady_clock::time_point last_write = std::chrono::steady_clock::now();
    };
    auto st = std::make_shared<State>(State{from, limit});
    res.set_chunked_content_provider("application/x-ndjson", [this, st](std::size_t, httplib::DataSink& sink) {
      if (stopping || st->left == 0) {
        sink.done();
        return true;
      }
      const auto batch = backend.events().wait_since(st->next, static_cast<std::size_t>(std::min<std::uint64_t>(st->left, 512)), kPoll);
      std::string out;
      for (const auto& e : batch) {
        out += e.to_json().dump();
        out += '\n';
        st->next = e.seq + 1;
        --st->left;
      }
      const auto now = std::chrono::steady_clock::now();
      if (out.empty() && now - st->last_write >= kKeepalive) out = "\n";
      if (!out.empty()) {
        if (!sink.is_writable() || !sink.write(out.data(), out.size())) return false;
        st->last_write = now;
      }
      return true;
    });
  }
};

ApiServer::ApiServer(OperatorBackend& backend) : impl_(std::make_unique<Impl>(backend)) {
  auto h = [this](const httplib::Request& req, httplib::Response& res) { impl_->handle(req, res); };
  impl_->srv.Get(".*", h);
  impl_->srv.Post(".*", h);
  impl_->srv.Put(".*", h);
  impl_->srv.Delete(".*", h);
  impl_->srv.Patch(".*", h);
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = impl_->srv.bind_to_any_port(host);
    if (port_ <= 0) throw Error(Errc::Io, "cannot bind " + host);
  } else {
    if (!impl_->srv.bind_to_port(host, port)) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
  }
  return port_;
}

void ApiServer::start() {
  thread_ = std::thread([this] { impl_->srv.listen_after_bind(); });
  impl_->srv.wait_until_ready();
}

void ApiServer::serve() { impl_->srv.listen_after_bind(); }

void ApiServer::stop() {
  impl_->stopping = true;
  impl_->srv.stop();
  if (thread_.joinable()) thread_.join();
}

struct ApiClient::Impl {
  httplib::Client cli;
  explicit Impl(const std::string& addr) : cli(addr) {}
};

ApiClient::ApiClient(const std::string& address, std::chrono::milliseconds timeout) {
  std::string addr = address;
  if (addr.find("://") == std::string::npos) addr = "http://" + addr;
  impl_ = std::make_unique<Impl>(addr);
  if (!impl_->cli.is_valid()) throw Unreachable("bad coordinator address: " + address);
  impl_->cli.set_connection_timeout(std::chrono::seconds(5));
  impl_->cli.set_read_timeout(timeout);
  impl_->cli.set_write_timeout(timeout);
}

ApiClient::~ApiClient() = default;

namespace {

nlohmann::json answer(const httplib::Result& res, const std::string& what) {
  if (!res) throw Unreachable(what + ": " + httplib::to_string(res.error()));
  nlohmann::json body;
  try {
    body = res->body.empty() ? nlohmann::json(nullptr) : nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw ApiError(res->status, "BadResponse", what + " answered with non-JSON");
  }
  if (res->status < 200 || res->status >= 300) {
    const std::string code = body.is_object() ? body.value("error", "HttpError") : "HttpError";
    const std::string detail = body.is_object() ? body.value("detail", "") : res->body;
    throw ApiError(res->status, code, detail);
  }
  return body;
}

}  // namespace

nlohmann::json ApiClient::get(const std::string& path) { return answer(impl_->cli.Get(path), "GET " + path); }

nlohmann::json ApiClient::post(const std::string& path, const nlohmann::json& body) {
  return answer(impl_->cli.Post(path, body.dump(), "application/json"), "POST " + path);
}

std::uint64_t ApiClient::events(std::uint64_t from, bool follow,
                                const std::function<bool(const nlohmann::json&)>& on_event) {
  const std::string path = "/events?from=" + std::to_string(from) + "&follow=" + (follow ? "1" : "0");
  std::string pending;
  std::string error_body;
  int status = 0;
  bool stopped = false;
  bool bad_line = false;
  std::uint64_t next = from;
  auto res = impl_->cli.Get(
      path, httplib::Headers{},
      [&](const httplib::Response& r) {
        status = r.status;
        return true;
      },
      [&](const char* data, std::size_t len) {
        if (status != 200) {
          error_body.append(data, len);
          return true;
        }
        pending.append(data, len);
        std::size_t start = 0;
        for (auto nl = pending.find('\n'); nl != std::string::npos; nl = pending.find('\n', start)) {
          const std::string line = pending.substr(start, nl - start);
          start = nl + 1;
          if (line.empty()) continue;
          nlohmann::json ev;
          try {
            ev = nlohmann::json::parse(line);
          } catch (const nlohmann::json::exception&) {
            bad_line = true;
            return false;
          }
          next = ev.value("seq", next) + 1;
          if (!on_event(ev)) {
            stopped = true;
            return false;
          }
        }
        pending.erase(0, start);
        return true;
      });
  if (bad_line) throw ApiError(status, "BadResponse", "event stream line is not JSON");
  if (stopped) return next;
  if (!res) throw Unreachable(path + ": " + httplib::to_string(res.error()));
  if (status != 200) {
    nlohmann::json body = nlohmann::json::parse(error_body, nullptr, false);
    throw ApiError(status, body.is_object() ? body.value("error", "HttpError") : "HttpError",
                   body.is_object() ? body.value("detail", "") : error_body);
  }
  return next;
}

}  // namespace bodyrig::api
