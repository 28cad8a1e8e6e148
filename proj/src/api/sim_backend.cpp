#include "bodyrig/api/sim_backend.hpp"

namespace bodyrig::api {

namespace {

std::unique_ptr<sim::SimCluster> boot(const sim::ClusterSpec& spec, const std::filesystem::path& root) {
  auto c = std::make_unique<sim::SimCluster>(spec, root);
  c->start();
  c->settle();
  return c;
}

}  // namespace

SimBackend::SimBackend(const sim::ClusterSpec& spec, const std::filesystem::path& store_root, Micros command_settle)
    : SimBackend(boot(spec, store_root), std::make_shared<std::mutex>(), command_settle) {}

SimBackend::SimBackend(std::unique_ptr<sim::SimCluster> cluster, std::shared_ptr<std::mutex> mu, Micros settle)
    : CoordinatorBackend(cluster->coordinator(), cluster->log(),
                         [mu](const std::function<void()>& fn) {
                           std::lock_guard lock(*mu);
                           fn();
                         }),
      cluster_(std::move(cluster)),
      mu_(std::move(mu)),
      settle_(settle) {}

void SimBackend::after_session(const std::string& id) {
  auto& c = *cluster_;
  const Micros cap = c.now() + c.spec().time_cap;
  if (!c.run_until([&] { return c.coordinator().active_session() != id; }, cap)) {
    throw Error(Errc::VirtualTimeExhausted, "session " + id + " did not finish");
  }
}

void SimBackend::after_fleet(const std::string& id) {
  auto& c = *cluster_;
  const Micros cap = c.now() + c.spec().time_cap;
  if (!c.run_until([&] { return c.coordinator().fleet_report(id).done; }, cap)) {
    throw Error(Errc::VirtualTimeExhausted, "fleet job " + id + " did not finish");
  }
}

void SimBackend::after_command() { cluster_->run_for(settle_); }

}  // namespace bodyrig::api
