#pragma once

#include <filesystem>
#include <memory>
#include <mutex>

#include "bodyrig/api/operator.hpp"
#include "bodyrig/sim/cluster.hpp"

namespace bodyrig::api {

// Operator API over a simulated cluster. Virtual time only moves inside
// requests: a session or fleet job runs to its end before the POST returns,
// and other commands advance the clock by `command_settle`.
class SimBackend final : public CoordinatorBackend {
 public:
  SimBackend(const sim::ClusterSpec& spec, const std::filesystem::path& store_root,
             Micros command_settle = Micros{100'000});

  sim::SimCluster& cluster() noexcept { return *cluster_; }

 protected:
  void after_session(const std::string& id) override;
  void after_fleet(const std::string& id) override;
  void after_command() override;

 private:
  SimBackend(std::unique_ptr<sim::SimCluster> cluster, std::shared_ptr<std::mutex> mu, Micros settle);

  std::unique_ptr<sim::SimCluster> cluster_;
  std::shared_ptr<std::mutex> mu_;
  Micros settle_;
};

}  // namespace bodyrig::api
