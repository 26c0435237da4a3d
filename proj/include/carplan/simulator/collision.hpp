#pragma once

#include <array>
#include <cmath>

#include "carplan/scene/geometry.hpp"
#include "carplan/scene/types.hpp"

namespace carplan::sim {

/// Oriented rectangle: center, heading of the length axis, full extents.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 1.0;
  double width = 1.0;

  static OrientedBox of(const AgentState& s) { return {s.position, s.heading, s.length, s.width}; }

  Vec2 axis_u() const { return {std::cos(heading), std::sin(heading)}; }
  Vec2 axis_v() const { return {-std::sin(heading), std::cos(heading)}; }

  std::array<Vec2, 4> corners() const {
    const Vec2 u = axis_u() * (0.5 * length), v = axis_v() * (0.5 * width);
    return {center + u + v, center - u + v, center - u - v, center + u - v};
  }

  bool contains(Vec2 p) const {
    const Vec2 d = p - center;
    return std::abs(d.dot(axis_u())) <= 0.5 * length && std::abs(d.dot(axis_v())) <= 0.5 * width;
  }
};

/// Separating-axis test over the four edge normals. Touching counts as overlap.
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const std::array<Vec2, 4> axes = {a.axis_u(), a.axis_v(), b.axis_u(), b.axis_v()};
  const Vec2 d = b.center - a.center;
  for (const Vec2& ax : axes) {
    const double ra = 0.5 * a.length * std::abs(a.axis_u().dot(ax)) + 0.5 * a.width * std::abs(a.axis_v().dot(ax));
    const double rb = 0.5 * b.length * std::abs(b.axis_u().dot(ax)) + 0.5 * b.width * std::abs(b.axis_v().dot(ax));
    if (std::abs(d.dot(ax)) > ra + rb) return false;
  }
  return true;
}

/// Footprint corners and edge midpoints, the points tested for drivable compliance.
inline std::array<Vec2, 8> footprint_samples(const OrientedBox& box) {
  const auto c = box.corners();
  return {c[0], c[1], c[2], c[3], (c[0] + c[1]) * 0.5, (c[1] + c[2]) * 0.5, (c[2] + c[3]) * 0.5, (c[3] + c[0]) * 0.5};
}

inline bool point_drivable(Vec2 p, const std::vector<Polygon>& region) {
  for (const auto& poly : region)
    if (poly.contains(p)) return true;
  return false;
}

inline bool footprint_drivable(const OrientedBox& box, const std::vector<Polygon>& region) {
  for (const Vec2& p : footprint_samples(box))
    if (!point_drivable(p, region)) return false;
  return true;
}

}  // namespace carplan::sim
