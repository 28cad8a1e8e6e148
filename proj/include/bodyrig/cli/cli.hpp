#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "bodyrig/api/http.hpp"
#include "bodyrig/api/operator.hpp"
#include "json.hpp"

namespace bodyrig::cli {

// Exit status contract for scripts.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitUnreachable = 3;
inline constexpr int kExitPartial = 4;
inline constexpr int kExitApiError = 5;

inline constexpr const char* kAddressEnv = "BODYRIG_COORDINATOR";
inline constexpr const char* kDefaultAddress = "127.0.0.1:7080";

// How verbs reach the operator API. Errors are api::ApiError and
// api::Unreachable, whatever the transport.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual nlohmann::json get(const std::string& path) = 0;
  virtual nlohmann::json post(const std::string& path, const nlohmann::json& body) = 0;
  // Same contract as api::ApiClient::events.
  virtual std::uint64_t events(std::uint64_t from, bool follow,
                               const std::function<bool(const nlohmann::json&)>& on_event) = 0;
};

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const std::string& address);
  nlohmann::json get(const std::string& path) override { return client_.get(path); }
  nlohmann::json post(const std::string& path, const nlohmann::json& body) override { return client_.post(path, body); }
  std::uint64_t events(std::uint64_t from, bool follow,
                       const std::function<bool(const nlohmann::json&)>& on_event) override {
    return client_.events(from, follow, on_event);
  }

 private:
  api::ApiClient client_;
};

// Calls the router directly, in process.
class LocalTransport final : public Transport {
 public:
  explicit LocalTransport(api::OperatorBackend& backend) : backend_(backend) {}
  explicit LocalTransport(std::unique_ptr<api::OperatorBackend> owned);

  nlohmann::json get(const std::string& path) override;
  nlohmann::json post(const std::string& path, const nlohmann::json& body) override;
  std::uint64_t events(std::uint64_t from, bool follow,
                       const std::function<bool(const nlohmann::json&)>& on_event) override;

 private:
  nlohmann::json call(api::Request req);

  std::unique_ptr<api::OperatorBackend> owned_;
  api::OperatorBackend& backend_;
};

// Builds the transport for a coordinator address. The default makes an
// HttpTransport.
using Connector = std::function<std::unique_ptr<Transport>(const std::string& address)>;

// Parses argv (argv[0] is the program name) and runs the verb. Never throws.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err, const Connector& connect = {});

}  // namespace bodyrig::cli
