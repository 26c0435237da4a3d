#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "carplan/scene/geometry.hpp"
#include "carplan/scene/types.hpp"
#include "carplan/simulator/idm.hpp"

namespace carplan::sim {

/// Anything a driver must not run into.
struct Obstacle {
  Vec2 position;
  double heading = 0.0;
  Vec2 velocity;
  double length = 4.5;
  double width = 2.0;

  static Obstacle of(const AgentState& s) { return {s.position, s.heading, s.velocity, s.length, s.width}; }
};

/// Speed cap along a path from lateral-acceleration limits, with braking look-ahead.
class SpeedProfile {
 public:
  SpeedProfile() = default;
  SpeedProfile(const Polyline& path, double lateral_accel) {
    const auto& pts = path.points();
    s_ = path.arc();
    cap_.assign(pts.size(), 1e9);
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
      const Vec2 a = pts[i] - pts[i - 1], b = pts[i + 1] - pts[i];
      const double turn = std::abs(std::atan2(a.cross(b), a.dot(b)));
      const double ds = 0.5 * (a.norm() + b.norm());
      const double kappa = ds > 0.0 ? turn / ds : 0.0;
      if (kappa > 1e-6) cap_[i] = std::sqrt(lateral_accel / kappa);
    }
  }

  /// Highest speed at `s` that can still brake at `decel` to every cap within `horizon`.
  double desired(double s, double v0, double decel, double horizon = 60.0) const {
    double v = v0;
    auto it = std::lower_bound(s_.begin(), s_.end(), s);
    for (auto i = static_cast<std::size_t>(it - s_.begin()); i < s_.size() && s_[i] <= s + horizon; ++i) {
      if (cap_[i] >= v) continue;
      v = std::min(v, std::sqrt(cap_[i] * cap_[i] + 2.0 * decel * std::max(0.0, s_[i] - s)));
    }
    return v;
  }

 private:
  std::vector<double> s_;
  std::vector<double> cap_;
};

/// Nearest obstacle ahead along `path` whose footprint overlaps the driving corridor.
inline std::optional<Leader> find_leader(const Polyline& path, double s_self, double self_length, double self_width,
                                         std::span<const Obstacle> obstacles, double lookahead = 80.0) {
  std::optional<Leader> best;
  const Vec2 here = path.point_at(s_self);
  for (const auto& ob : obstacles) {
    if ((ob.position - here).norm() > lookahead + 10.0) continue;
    const Projection pr = path.project(ob.position, s_self - lookahead - 20.0, s_self + lookahead + 20.0);
    if (pr.s <= s_self) continue;
    const double local_heading = path.heading_at(pr.s);
    const double rel = ob.heading - local_heading;
    const double half_across = 0.5 * ob.length * std::abs(std::sin(rel)) + 0.5 * ob.width * std::abs(std::cos(rel));
    if (pr.distance > 0.5 * self_width + half_across + 0.3) continue;
    const double half_along = 0.5 * ob.length * std::abs(std::cos(rel)) + 0.5 * ob.width * std::abs(std::sin(rel));
    const double gap = pr.s - s_self - 0.5 * self_length - half_along;
    if (pr.s - s_self > lookahead) continue;
    const Vec2 tangent{std::cos(local_heading), std::sin(local_heading)};
    const double v_along = ob.velocity.dot(tangent);
    if (!best || gap < best->gap) best = Leader{v_along, gap};
  }
  return best;
}

/// Vehicle, bicycle, or pedestrian moving along a fixed path under IDM.
struct PathAgent {
  Polyline path;
  SpeedProfile profile;
  double s = 0.0;
  double v = 0.0;
  IdmParams idm;
  double length = 4.5;
  double width = 2.0;
  AgentCategory category = AgentCategory::vehicle;
  /// Pedestrians ignore traffic.
  bool yields = true;

  AgentState state() const {
    AgentState st;
    st.position = path.point_at(s);
    st.heading = wrap_angle(path.heading_at(s));
    st.velocity = Vec2{std::cos(st.heading), std::sin(st.heading)} * v;
    st.length = length;
    st.width = width;
    st.category = category;
    return st;
  }

  double accel(std::span<const Obstacle> others) const {
    IdmParams p = idm;
    p.desired_speed = profile.desired(s, idm.desired_speed, idm.comfort_decel);
    std::optional<Leader> lead;
    if (yields) lead = find_leader(path, s, length, width, others);
    return idm_accel(v, lead, p);
  }

  void advance(double a, double dt) {
    const auto step = integrate_longitudinal(v, a, dt);
    s += step.distance;
    v = step.speed;
  }
};

/// Kinematic unicycle update with acceleration and path curvature as inputs.
inline AgentState integrate_unicycle(const AgentState& st, double accel, double curvature, double dt) {
  const auto step = integrate_longitudinal(st.speed(), accel, dt);
  const double dtheta = curvature * step.distance;
  const double mid = st.heading + 0.5 * dtheta;
  AgentState out = st;
  out.position = st.position + Vec2{std::cos(mid), std::sin(mid)} * step.distance;
  out.heading = wrap_angle(st.heading + dtheta);
  out.velocity = Vec2{std::cos(out.heading), std::sin(out.heading)} * step.speed;
  return out;
}

struct EgoControl {
  double accel = 0.0;
  double curvature = 0.0;
};

/// Scripted expert: pure-pursuit steering on the route, IDM speed control
/// against the nearest obstacle ahead on the route.
class ScriptedExpert {
 public:
  ScriptedExpert() = default;
  ScriptedExpert(Polyline route, IdmParams idm, double lateral_accel = 2.5)
      : route_(std::move(route)), profile_(route_, lateral_accel), idm_(idm) {}

  const Polyline& route() const { return route_; }
  const IdmParams& idm() const { return idm_; }

  EgoControl control(const AgentState& ego, std::span<const Obstacle> obstacles) const {
    const Projection pr = route_.project(ego.position);
    const double v = ego.speed();
    const double lookahead = std::clamp(4.0 + 0.5 * v, 5.0, 15.0);
    const Vec2 target = route_.point_at(pr.s + lookahead);
    const Vec2 local = Frame{ego.position, ego.heading}.to_local(target);
    const double dist = local.norm();
    const double alpha = std::atan2(local.y, local.x);
    EgoControl u;
    u.curvature = dist > 1e-6 ? std::clamp(2.0 * std::sin(alpha) / dist, -0.3, 0.3) : 0.0;

    IdmParams p = idm_;
    p.desired_speed = profile_.desired(pr.s, idm_.desired_speed, idm_.comfort_decel);
    const auto lead = find_leader(route_, pr.s, ego.length, ego.width, obstacles);
    u.accel = idm_accel(v, lead, p);
    return u;
  }

  AgentState step(const AgentState& ego, std::span<const Obstacle> obstacles, double dt = kDt) const {
    const EgoControl u = control(ego, obstacles);
    return integrate_unicycle(ego, u.accel, u.curvature, dt);
  }

 private:
  Polyline route_;
  SpeedProfile profile_;
  IdmParams idm_;
};

}  // namespace carplan::sim
