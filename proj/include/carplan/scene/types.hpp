#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "carplan/scene/geometry.hpp"

namespace carplan {

/// Simulation and log tick, seconds.
inline constexpr double kDt = 0.1;

enum class AgentCategory : std::uint8_t { vehicle, pedestrian, bicycle };
enum class PolylineKind : std::uint8_t { lane_center, road_boundary, crosswalk };
enum class Topology : std::uint8_t { straight, curved, intersection, lane_change };

inline std::string_view to_string(AgentCategory c) {
  switch (c) {
    case AgentCategory::vehicle: return "vehicle";
    case AgentCategory::pedestrian: return "pedestrian";
    case AgentCategory::bicycle: return "bicycle";
  }
  return "?";
}
inline std::string_view to_string(PolylineKind k) {
  switch (k) {
    case PolylineKind::lane_center: return "lane_center";
    case PolylineKind::road_boundary: return "road_boundary";
    case PolylineKind::crosswalk: return "crosswalk";
  }
  return "?";
}
inline std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::straight: return "straight";
    case Topology::curved: return "curved";
    case Topology::intersection: return "intersection";
    case Topology::lane_change: return "lane_change";
  }
  return "?";
}

inline std::optional<AgentCategory> parse_category(std::string_view s) {
  if (s == "vehicle") return AgentCategory::vehicle;
  if (s == "pedestrian") return AgentCategory::pedestrian;
  if (s == "bicycle") return AgentCategory::bicycle;
  return std::nullopt;
}
inline std::optional<PolylineKind> parse_polyline_kind(std::string_view s) {
  if (s == "lane_center") return PolylineKind::lane_center;
  if (s == "road_boundary") return PolylineKind::road_boundary;
  if (s == "crosswalk") return PolylineKind::crosswalk;
  return std::nullopt;
}
inline std::optional<Topology> parse_topology(std::string_view s) {
  if (s == "straight") return Topology::straight;
  if (s == "curved") return Topology::curved;
  if (s == "intersection") return Topology::intersection;
  if (s == "lane_change") return Topology::lane_change;
  return std::nullopt;
}

struct AgentState {
  Vec2 position;
  double heading = 0.0;
  Vec2 velocity;
  double length = 4.5;
  double width = 2.0;
  AgentCategory category = AgentCategory::vehicle;

  double speed() const { return velocity.norm(); }
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// States at 10 Hz. Index i corresponds to t = (i - current_index) · kDt.
struct AgentTrack {
  std::vector<AgentState> states;
  std::vector<std::uint8_t> valid;
  /// Lane path the agent drives along; used by reactive simulation. May be empty.
  std::vector<Vec2> path;
  double desired_speed = 0.0;

  friend bool operator==(const AgentTrack&, const AgentTrack&) = default;
};

struct MapPolyline {
  std::vector<Vec2> points;
  PolylineKind kind = PolylineKind::lane_center;
  friend bool operator==(const MapPolyline&, const MapPolyline&) = default;
};

/// Goal-directed lane polyline, evenly spaced in arc length.
struct Centerline {
  std::vector<Vec2> points;
  friend bool operator==(const Centerline&, const Centerline&) = default;
};

/// One driving episode in the frame of the AV at t = 0.
///
/// Tracks hold `history_steps` states up to and including t = 0, followed by
/// `log_steps` logged future states. The first `future_steps` of those form
/// the supervised horizon; the rest only feed closed-loop replay.
struct Scenario {
  std::uint64_t seed = 0;
  Topology topology = Topology::straight;
  int history_steps = 20;
  int future_steps = 40;
  int log_steps = 80;
  AgentTrack av;
  std::vector<AgentTrack> agents;
  std::vector<MapPolyline> map;
  std::vector<Centerline> centerlines;
  Vec2 goal;
  std::vector<Polygon> drivable_region;
  /// Dense route the expert followed; centerlines[0] is a resampling of it.
  std::vector<Vec2> route;

  int current_index() const { return history_steps - 1; }
  int total_steps() const { return history_steps + log_steps; }
  const AgentState& av_now() const { return av.states.at(static_cast<std::size_t>(current_index())); }

  friend bool operator==(const Scenario& a, const Scenario& b) {
    auto poly_eq = [](const std::vector<Polygon>& x, const std::vector<Polygon>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i].vertices != y[i].vertices) return false;
      return true;
    };
    return a.seed == b.seed && a.topology == b.topology && a.history_steps == b.history_steps &&
           a.future_steps == b.future_steps && a.log_steps == b.log_steps && a.av == b.av && a.agents == b.agents &&
           a.map == b.map && a.centerlines == b.centerlines && a.goal == b.goal &&
           poly_eq(a.drivable_region, b.drivable_region) && a.route == b.route;
  }
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline AgentState transform_state(const AgentState& s, const Frame& f) {
  AgentState out = s;
  out.position = f.to_local(s.position);
  out.heading = f.heading_to_local(s.heading);
  out.velocity = f.rotate_to_local(s.velocity);
  return out;
}

inline std::vector<Vec2> transform_points(const std::vector<Vec2>& pts, const Frame& f) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (auto p : pts) out.push_back(f.to_local(p));
  return out;
}

/// Re-expresses every coordinate of `s` in `f`. Invalid placeholder states stay zeroed.
inline Scenario transform_scenario(const Scenario& s, const Frame& f) {
  Scenario out = s;
  auto do_track = [&](AgentTrack& t) {
    for (std::size_t i = 0; i < t.states.size(); ++i)
      if (t.valid[i]) t.states[i] = transform_state(t.states[i], f);
    t.path = transform_points(t.path, f);
  };
  do_track(out.av);
  for (auto& a : out.agents) do_track(a);
  for (auto& m : out.map) m.points = transform_points(m.points, f);
  for (auto& c : out.centerlines) c.points = transform_points(c.points, f);
  out.goal = f.to_local(s.goal);
  for (auto& p : out.drivable_region) p = p.transformed(f);
  out.route = transform_points(s.route, f);
  return out;
}

/// Frame placing the AV at the origin heading along +x at t = 0.
inline Frame av_frame(const Scenario& s) {
  const AgentState& now = s.av_now();
  return Frame{now.position, now.heading};
}

/// AV-centric normalization. Idempotent: a normalized scenario is returned unchanged.
inline Scenario normalize_to_av_frame(const Scenario& s) {
  const Frame f = av_frame(s);
  if (f.is_identity()) return s;
  return transform_scenario(s, f);
}

}  // namespace carplan
