#include "bodyrig/fleet/fleet.hpp"

#include <algorithm>
#include <charconv>

#include "bodyrig/core/error.hpp"

namespace bodyrig::fleet {

namespace {

int parse_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(Errc::InvalidArgument, "not a number: " + std::string(s));
  }
  return v;
}

}  // namespace

TargetSelector TargetSelector::parse(std::string_view text) {
  TargetSelector sel;
  if (text == "all") return sel;
  if (text.starts_with("beams:")) {
    const std::string_view range = text.substr(6);
    const auto dash = range.find('-');
    sel.kind = Kind::BeamRange;
    if (dash == std::string_view::npos) {
      sel.beam_lo = sel.beam_hi = parse_int(range);
    } else {
      sel.beam_lo = parse_int(range.substr(0, dash));
      sel.beam_hi = parse_int(range.substr(dash + 1));
    }
    if (sel.beam_lo < 0 || sel.beam_hi < sel.beam_lo) {
      throw Error(Errc::InvalidArgument, "bad beam range: " + std::string(range));
    }
    return sel;
  }
  sel.kind = Kind::List;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto part = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (part.empty()) throw Error(Errc::InvalidArgument, "empty node id in target list");
    sel.ids.emplace_back(part);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (sel.ids.empty()) throw Error(Errc::InvalidArgument, "empty target list");
  std::sort(sel.ids.begin(), sel.ids.end());
  sel.ids.erase(std::unique(sel.ids.begin(), sel.ids.end()), sel.ids.end());
  return sel;
}

std::string TargetSelector::to_string() const {
  switch (kind) {
    case Kind::All:
      return "all";
    case Kind::BeamRange:
      return "beams:" + std::to_string(beam_lo) + "-" + std::to_string(beam_hi);
    case Kind::List: {
      std::string out;
      for (const auto& id : ids) out += (out.empty() ? "" : ",") + id;
      return out;
    }
  }
  return "all";
}

std::vector<std::string> resolve(const TargetSelector& sel, const std::vector<coordinator::NodeRecord>& nodes) {
  std::vector<std::string> out;
  switch (sel.kind) {
    case TargetSelector::Kind::All:
      for (const auto& n : nodes) out.push_back(n.node_id);
      break;
    case TargetSelector::Kind::BeamRange:
      for (const auto& n : nodes) {
        if (n.beam >= sel.beam_lo && n.beam <= sel.beam_hi) out.push_back(n.node_id);
      }
      break;
    case TargetSelector::Kind::List:
      out = sel.ids;
      break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw Error(Errc::EmptySelection, "no node matches " + sel.to_string());
  return out;
}

void FleetJob::validate() const {
  if (concurrency_limit < 1) throw Error(Errc::InvalidArgument, "concurrency limit must be at least 1");
  if (command.empty()) throw Error(Errc::InvalidArgument, "empty command");
  if (per_node_timeout <= Micros{0}) throw Error(Errc::InvalidArgument, "timeout must be positive");
}

std::string_view to_string(RowStatus s) noexcept {
  switch (s) {
    case RowStatus::Ok:
      return "Ok";
    case RowStatus::Failed:
      return "Failed";
    case RowStatus::Timeout:
      return "Timeout";
    case RowStatus::Unreachable:
      return "Unreachable";
  }
  return "?";
}

nlohmann::json FleetReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"node_id", r.node_id},
                       {"status", fleet::to_string(r.status)},
                       {"output", r.output},
                       {"duration_ms", r.duration_ms}};
    row["exit_status"] = r.exit_status ? nlohmann::json(*r.exit_status) : nlohmann::json(nullptr);
    rs.push_back(std::move(row));
  }
  return {{"job_id", job_id}, {"command", command}, {"done", done}, {"peak_concurrency", peak_concurrency},
          {"rows", std::move(rs)}};
}

FleetReport FleetReport::from_json(const nlohmann::json& j) {
  FleetReport r;
  r.job_id = j.at("job_id").get<std::string>();
  r.command = j.at("command").get<std::string>();
  r.done = j.at("done").get<bool>();
  r.peak_concurrency = j.at("peak_concurrency").get<std::size_t>();
  for (const auto& row : j.at("rows")) {
    FleetRow fr;
    fr.node_id = row.at("node_id").get<std::string>();
    const auto st = row.at("status").get<std::string>();
    fr.status = st == "Ok"        ? RowStatus::Ok
                : st == "Failed"  ? RowStatus::Failed
                : st == "Timeout" ? RowStatus::Timeout
                                  : RowStatus::Unreachable;
    if (!row.at("exit_status").is_null()) fr.exit_status = row.at("exit_status").get<int>();
    fr.output = row.at("output").get<std::string>();
    fr.duration_ms = row.at("duration_ms").get<std::int64_t>();
    r.rows.push_back(std::move(fr));
  }
  return r;
}

FleetRun::FleetRun(FleetJob job, std::vector<std::string> targets) : job_(std::move(job)), targets_(std::move(targets)) {
  job_.validate();
  if (targets_.empty()) throw Error(Errc::EmptySelection, "fleet job without targets");
}

std::vector<std::string> FleetRun::launch() {
  std::vector<std::string> out;
  while (running_.size() < job_.concurrency_limit && next_ < targets_.size()) {
    const std::string& id = targets_[next_++];
    if (skipped_.contains(id)) continue;
    running_.insert(id);
    out.push_back(id);
  }
  peak_ = std::max(peak_, running_.size());
  return out;
}

bool FleetRun::on_result(const std::string& node_id, int exit_status, std::string output, std::int64_t duration_ms) {
  if (running_.erase(node_id) == 0) return false;
  rows_[node_id] = FleetRow{node_id, exit_status == 0 ? RowStatus::Ok : RowStatus::Failed, exit_status,
                            std::move(output), duration_ms};
  return true;
}

bool FleetRun::on_timeout(const std::string& node_id) {
  if (running_.erase(node_id) == 0) return false;
  rows_[node_id] = FleetRow{node_id, RowStatus::Timeout, std::nullopt, {},
                            job_.per_node_timeout.count() / 1000};
  return true;
}

bool FleetRun::on_unreachable(const std::string& node_id) {
  if (rows_.contains(node_id)) return false;
  const bool was_running = running_.erase(node_id) > 0;
  if (!was_running) {
    const auto pos = std::find(targets_.begin(), targets_.end(), node_id);
    if (pos == targets_.end() || static_cast<std::size_t>(pos - targets_.begin()) < next_) return false;
    skipped_.insert(node_id);
  }
  rows_[node_id] = FleetRow{node_id, RowStatus::Unreachable, std::nullopt, {}, 0};
  return true;
}

FleetReport FleetRun::report() const {
  FleetReport r;
  r.job_id = job_.job_id;
  r.command = job_.command;
  r.done = done();
  r.peak_concurrency = peak_;
  for (const auto& [id, row] : rows_) r.rows.push_back(row);
  return r;
}

std::size_t peak_concurrency(const std::vector<LogEvent>& log, const std::string& job_id) {
  std::size_t open = 0;
  std::size_t peak = 0;
  for (const auto& e : log) {
    if (e.kind != "fleet_exec_start" && e.kind != "fleet_exec_end") continue;
    if (e.data.value("job_id", "") != job_id) continue;
    if (e.kind == "fleet_exec_start") {
      peak = std::max(peak, ++open);
    } else if (open > 0) {
      --open;
    }
  }
  return peak;
}

}  // namespace bodyrig::fleet
