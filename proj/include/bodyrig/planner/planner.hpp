#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace bodyrig::planner {

// Copper resistivity that makes the 0.8 m / 0.27 mm^2 / 1.25 A run land on
// 4.8675 V when both conductors (supply and return) are counted.
inline constexpr double kCalibratedResistivity = 1.78875e-8;  // ohm * m

struct WireSpec {
  double length_m = 0.8;
  double cross_section_mm2 = 0.27;
  double current_a = 1.25;
  double supply_v = 5.0;
  double resistivity_ohm_m = kCalibratedResistivity;
};

// `safety_margin_v` is informational only; no calculation consumes it.
struct PowerBudget {
  double min_operating_v = 4.75;
  double safety_margin_v = 0.1;
};

// supply - I * rho * 2L / A. Zero current is allowed and yields the supply.
double end_voltage(const WireSpec& w);

// Largest length whose end voltage stays at or above the budget floor.
// Throws Error{InfeasibleBudget} when the floor is not below the supply.
double max_wire_length(const WireSpec& w, const PowerBudget& b);

struct RigPlan {
  double width_m = 2.90;
  double depth_m = 2.51;
  double height_m = 2.10;
  std::size_t beams = 24;
  std::size_t cameras_per_beam = 4;
  double min_angle_threshold_deg = 13.0;
  std::size_t entrance_gap_slots = 0;

  // LED stripe documentation constants; nothing computes with them.
  int leds_per_meter = 60;
  double lumen_per_meter_min = 1000.0;
  double lumen_per_meter_max = 1300.0;

  std::size_t camera_count() const noexcept { return beams * cameras_per_beam; }
  double perimeter_m() const noexcept { return 2.0 * (width_m + depth_m); }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

// Beam slots sit at equal arc length along the width x depth rectangle,
// centred on the origin with the back side at y = -depth/2. Slot 0 is the
// back midpoint and slots advance counter-clockwise. A gap of g slots
// removes the g slots nearest the back midpoint; for even g the slot grid is
// shifted half a spacing so the gap stays centred.
std::vector<Point2> beam_positions(const RigPlan& r);

// Bearing (degrees) of the entrance, i.e. of the back midpoint.
inline constexpr double kEntranceBearingDeg = -90.0;

// Central angles between bearing-adjacent points, in ascending bearing order
// (the last entry wraps around). Throws Error{DegenerateCenter} if a point
// coincides with the center and Error{InvalidArgument} for fewer than two points.
std::vector<double> adjacent_angles(std::span<const Point2> points, Point2 center);

// Minimum of adjacent_angles. When `gap_bearing_deg` is set, the adjacent
// pair whose sector contains that bearing is skipped.
double min_adjacent_angle(std::span<const Point2> points, Point2 center,
                          std::optional<double> gap_bearing_deg = std::nullopt);

// beam_positions + min_adjacent_angle about the frame center, skipping the
// entrance pair when the plan has a gap.
double rig_min_angle(const RigPlan& r);

struct TransferModel {
  std::size_t node_count = 96;
  std::size_t images_per_node = 2;
  double bytes_per_image = 2.0e6;
  double nic_bandwidth = 125e6;  // bytes/s
  double sd_read_rate = 15e6;    // bytes/s
  double fixed_overhead_s = 0.5;

  double total_bytes() const noexcept {
    return static_cast<double>(node_count * images_per_node) * bytes_per_image;
  }
};

struct TransferWindow {
  double lower_s = 0.0;
  double upper_s = 0.0;
};

// lower: NIC-bound with perfect pipelining. upper: lower plus one node's
// staging read that was not overlapped with the network.
TransferWindow transfer_time_window(const TransferModel& t);

}  // namespace bodyrig::planner
