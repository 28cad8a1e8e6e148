#include "bodyrig/planner/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bodyrig/core/error.hpp"

namespace bodyrig::planner {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::InvalidArgument, what);
}

void check_wire(const WireSpec& w) {
  require(w.length_m > 0.0, "wire length must be positive");
  require(w.cross_section_mm2 > 0.0, "cross section must be positive");
  require(w.current_a >= 0.0, "current must be non-negative");
  require(w.supply_v > 0.0, "supply voltage must be positive");
  require(w.resistivity_ohm_m > 0.0, "resistivity must be positive");
}

double bearing_deg(Point2 p, Point2 center) {
  double deg = std::atan2(p.y - center.y, p.x - center.x) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  return deg;
}

// Point at arc length `s` along the rectangle boundary, starting from the
// back midpoint and running counter-clockwise.
Point2 perimeter_point(const RigPlan& r, double s) {
  const double w = r.width_m;
  const double d = r.depth_m;
  const double p = r.perimeter_m();
  s = std::fmod(s, p);
  if (s < 0.0) s += p;
  if (s <= w / 2) return {s, -d / 2};
  s -= w / 2;
  if (s <= d) return {w / 2, -d / 2 + s};
  s -= d;
  if (s <= w) return {w / 2 - s, d / 2};
  s -= w;
  if (s <= d) return {-w / 2, d / 2 - s};
  s -= d;
  return {-w / 2 + s, -d / 2};
}

}  // namespace

double end_voltage(const WireSpec& w) {
  check_wire(w);
  const double area_m2 = w.cross_section_mm2 * 1e-6;
  return w.supply_v - w.current_a * w.resistivity_ohm_m * (2.0 * w.length_m) / area_m2;
}

double max_wire_length(const WireSpec& w, const PowerBudget& b) {
  check_wire(w);
  if (b.min_operating_v >= w.supply_v) {
    throw Error(Errc::InfeasibleBudget, "minimum operating voltage is not below the supply");
  }
  require(w.current_a > 0.0, "current must be positive for a length limit");
  const double area_m2 = w.cross_section_mm2 * 1e-6;
  return (w.supply_v - b.min_operating_v) * area_m2 / (2.0 * w.current_a * w.resistivity_ohm_m);
}

std::vector<Point2> beam_positions(const RigPlan& r) {
  require(r.width_m > 0.0 && r.depth_m > 0.0, "frame dimensions must be positive");
  require(r.beams >= 3, "at least three beams");
  require(r.entrance_gap_slots + 2 <= r.beams, "entrance gap leaves fewer than two beams");
  const double p = r.perimeter_m();
  const double spacing = p / static_cast<double>(r.beams);
  const std::size_t gap = r.entrance_gap_slots;
  const double offset = (gap > 0 && gap % 2 == 0) ? spacing / 2 : 0.0;
  // Slots within this arc distance of the back midpoint fall in the gap.
  const double gap_reach = gap == 0 ? -1.0 : (static_cast<double>(gap) - 1.0) * spacing / 2 + spacing * 1e-9;

  std::vector<Point2> out;
  out.reserve(r.beams);
  for (std::size_t k = 0; k < r.beams; ++k) {
    const double s = offset + static_cast<double>(k) * spacing;
    double from_back = std::fmod(s, p);
    if (from_back > p / 2) from_back -= p;
    if (std::abs(from_back) <= gap_reach) continue;
    out.push_back(perimeter_point(r, s));
  }
  return out;
}

std::vector<double> adjacent_angles(std::span<const Point2> points, Point2 center) {
  if (points.size() < 2) throw Error(Errc::InvalidArgument, "need at least two points");
  std::vector<double> bearings;
  bearings.reserve(points.size());
  for (const Point2& p : points) {
    if (std::hypot(p.x - center.x, p.y - center.y) < 1e-12) {
      throw Error(Errc::DegenerateCenter, "point coincides with center");
    }
    bearings.push_back(bearing_deg(p, center));
  }
  std::sort(bearings.begin(), bearings.end());
  std::vector<double> out;
  out.reserve(bearings.size());
  for (std::size_t i = 0; i + 1 < bearings.size(); ++i) out.push_back(bearings[i + 1] - bearings[i]);
  out.push_back(bearings.front() + 360.0 - bearings.back());
  return out;
}

double min_adjacent_angle(std::span<const Point2> points, Point2 center,
                          std::optional<double> gap_bearing_deg) {
  std::vector<double> bearings;
  const std::vector<double> angles = adjacent_angles(points, center);
  for (const Point2& p : points) bearings.push_back(bearing_deg(p, center));
  std::sort(bearings.begin(), bearings.end());

  std::optional<std::size_t> skip;
  if (gap_bearing_deg) {
    double g = std::fmod(*gap_bearing_deg, 360.0);
    if (g < 0.0) g += 360.0;
    for (std::size_t i = 0; i < angles.size(); ++i) {
      double rel = g - bearings[i];
      if (rel < 0.0) rel += 360.0;
      if (rel > 0.0 && rel < angles[i]) {
        skip = i;
        break;
      }
    }
  }
  double best = 360.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (skip && *skip == i) continue;
    best = std::min(best, angles[i]);
  }
  return best;
}

double rig_min_angle(const RigPlan& r) {
  const std::vector<Point2> pts = beam_positions(r);
  std::optional<double> gap;
  if (r.entrance_gap_slots > 0) gap = kEntranceBearingDeg;
  return min_adjacent_angle(pts, {0.0, 0.0}, gap);
}

TransferWindow transfer_time_window(const TransferModel& t) {
  require(t.node_count > 0 && t.images_per_node > 0, "counts must be positive");
  require(t.bytes_per_image > 0.0, "bytes_per_image must be positive");
  require(t.nic_bandwidth > 0.0 && t.sd_read_rate > 0.0, "rates must be positive");
  require(t.fixed_overhead_s >= 0.0, "overhead must be non-negative");
  const double lower = t.total_bytes() / t.nic_bandwidth + t.fixed_overhead_s;
  const double per_node = static_cast<double>(t.images_per_node) * t.bytes_per_image;
  return {lower, lower + per_node / t.sd_read_rate};
}

}  // namespace bodyrig::planner
