#include "bodyrig/agent/config.hpp"

#include <cmath>

#include "bodyrig/core/error.hpp"

namespace bodyrig::agent {

void AgentConfig::validate() const {
  if (node_id.empty()) throw Error(Errc::InvalidArgument, "node_id must not be empty");
  if (reconnect_base <= Micros{0}) throw Error(Errc::InvalidArgument, "reconnect_base must be positive");
  if (!(jitter_fraction >= 0.0 && jitter_fraction < 1.0)) {
    throw Error(Errc::InvalidArgument, "jitter_fraction must be in [0, 1)");
  }
  if (heartbeat_period <= Micros{0}) throw Error(Errc::InvalidArgument, "heartbeat_period must be positive");
  if (!(staging_read_rate > 0.0) || !(staging_write_rate > 0.0)) {
    throw Error(Errc::InvalidArgument, "staging rates must be positive");
  }
}

Micros next_reconnect_delay(std::uint64_t /*attempt*/, const AgentConfig& cfg, SplitMix64& rng) {
  const double j = cfg.jitter_fraction * (2.0 * rng.next_unit() - 1.0);
  return Micros{static_cast<std::int64_t>(std::llround(static_cast<double>(cfg.reconnect_base.count()) * (1.0 + j)))};
}

}  // namespace bodyrig::agent
