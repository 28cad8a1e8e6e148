#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bodyrig/coordinator/registry.hpp"
#include "bodyrig/core/event_log.hpp"
#include "bodyrig/core/time.hpp"
#include "json.hpp"

namespace bodyrig::fleet {

// "all", "beams:<lo>-<hi>" (inclusive) or a comma-separated id list.
struct TargetSelector {
  enum class Kind { All, BeamRange, List } kind = Kind::All;
  int beam_lo = 0;
  int beam_hi = 0;
  std::vector<std::string> ids;

  static TargetSelector parse(std::string_view text);  // Error{InvalidArgument}
  std::string to_string() const;
  friend bool operator==(const TargetSelector&, const TargetSelector&) = default;
};

// Known node ids matching the selector, sorted. Listed ids that are not
// registered are kept; they report as Unreachable. Throws
// Error{EmptySelection}.
std::vector<std::string> resolve(const TargetSelector& sel, const std::vector<coordinator::NodeRecord>& nodes);

inline constexpr std::size_t kDefaultConcurrency = 16;

struct FleetJob {
  std::string job_id;
  TargetSelector targets;
  std::string command;
  std::size_t concurrency_limit = kDefaultConcurrency;
  Micros per_node_timeout{30'000'000};

  void validate() const;  // Error{InvalidArgument}
};

enum class RowStatus { Ok, Failed, Timeout, Unreachable };
std::string_view to_string(RowStatus s) noexcept;

struct FleetRow {
  std::string node_id;
  RowStatus status = RowStatus::Ok;
  std::optional<int> exit_status;
  std::string output;
  std::int64_t duration_ms = 0;
  friend bool operator==(const FleetRow&, const FleetRow&) = default;
};

struct FleetReport {
  std::string job_id;
  std::string command;
  bool done = false;
  std::size_t peak_concurrency = 0;
  std::vector<FleetRow> rows;  // one per target, sorted by node_id

  nlohmann::json to_json() const;
  static FleetReport from_json(const nlohmann::json& j);
};

// Bounded-concurrency scheduler for one job. The owner launches what
// launch() returns and reports each outcome back.
class FleetRun {
 public:
  FleetRun(FleetJob job, std::vector<std::string> targets);

  // Nodes to start now; never lets more than concurrency_limit run.
  std::vector<std::string> launch();

  // Each returns false when the node is not currently running (late or
  // duplicate report) and changes nothing then.
  bool on_result(const std::string& node_id, int exit_status, std::string output, std::int64_t duration_ms);
  bool on_timeout(const std::string& node_id);
  // For a node that is running or still waiting.
  bool on_unreachable(const std::string& node_id);

  bool done() const noexcept { return rows_.size() == targets_.size(); }
  std::size_t running() const noexcept { return running_.size(); }
  std::size_t peak() const noexcept { return peak_; }
  const FleetJob& job() const noexcept { return job_; }
  bool is_running(const std::string& node_id) const { return running_.contains(node_id); }
  FleetReport report() const;

 private:
  FleetJob job_;
  std::vector<std::string> targets_;
  std::size_t next_ = 0;
  std::set<std::string> running_;
  std::set<std::string> skipped_;  // unreachable before launch
  std::map<std::string, FleetRow> rows_;
  std::size_t peak_ = 0;
};

// Maximum number of simultaneously open executions of `job_id`, swept over
// fleet_exec_start / fleet_exec_end events.
std::size_t peak_concurrency(const std::vector<LogEvent>& log, const std::string& job_id);

}  // namespace bodyrig::fleet
