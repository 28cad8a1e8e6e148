#pragma once

#include <cstdint>
#include <string>

#include "bodyrig/core/splitmix.hpp"
#include "bodyrig/core/time.hpp"

namespace bodyrig::agent {

struct AgentConfig {
  std::string node_id;
  int beam = 0;
  int slot = 0;
  std::string coordinator_addr = "127.0.0.1:7100";
  Micros reconnect_base{2'000'000};
  double jitter_fraction = 0.1;
  Micros heartbeat_period{1'000'000};
  double staging_read_rate = 20e6;   // bytes/s, SD-card class
  double staging_write_rate = 10e6;  // bytes/s
  std::uint64_t rng_seed = 0;

  // Throws Error{InvalidArgument}.
  void validate() const;
};

// Constant-interval reconnect policy: reconnect_base * (1 + j), j uniform in
// [-jitter_fraction, +jitter_fraction] drawn from `rng`. The attempt number
// does not change the interval.
Micros next_reconnect_delay(std::uint64_t attempt, const AgentConfig& cfg, SplitMix64& rng);

}  // namespace bodyrig::agent
