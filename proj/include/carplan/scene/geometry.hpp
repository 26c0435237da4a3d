#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace carplan {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Wraps into (-π, π].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

/// A rigid frame: `origin` and `heading` of the local x-axis in the parent frame.
struct Frame {
  Vec2 origin;
  double heading = 0.0;

  Vec2 to_local(Vec2 p) const {
    const double c = std::cos(heading), s = std::sin(heading);
    const Vec2 d = p - origin;
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
  }
  Vec2 rotate_to_local(Vec2 v) const {
    const double c = std::cos(heading), s = std::sin(heading);
    return {c * v.x + s * v.y, -s * v.x + c * v.y};
  }
  Vec2 to_parent(Vec2 p) const {
    const double c = std::cos(heading), s = std::sin(heading);
    return Vec2{c * p.x - s * p.y, s * p.x + c * p.y} + origin;
  }
  Vec2 rotate_to_parent(Vec2 v) const {
    const double c = std::cos(heading), s = std::sin(heading);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
  }
  double heading_to_local(double h) const { return wrap_angle(h - heading); }
  double heading_to_parent(double h) const { return wrap_angle(h + heading); }
  bool is_identity() const { return origin.x == 0.0 && origin.y == 0.0 && heading == 0.0; }
};

/// Result of projecting a point onto a polyline.
struct Projection {
  double s = 0.0;        // arc length of the foot point
  double lateral = 0.0;  // signed offset, positive to the left
  double distance = 0.0;
  Vec2 point;
  std::size_t segment = 0;
};

/// Piecewise-linear curve with a cumulative arc-length table.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) { rebuild(); }

  const std::vector<Vec2>& points() const { return pts_; }
  std::size_t size() const { return pts_.size(); }
  bool empty() const { return pts_.empty(); }
  double length() const { return s_.empty() ? 0.0 : s_.back(); }
  const std::vector<double>& arc() const { return s_; }

  Vec2 point_at(double s) const {
    if (pts_.size() == 1) return pts_[0];
    const std::size_t i = segment_at(s);
    const double seg = s_[i + 1] - s_[i];
    const double u = seg > 0.0 ? (std::clamp(s, s_[i], s_[i + 1]) - s_[i]) / seg : 0.0;
    if (s > length()) return pts_.back() + tangent_of(i) * (s - length());
    if (s < 0.0) return pts_.front() + tangent_of(0) * s;
    return pts_[i] + (pts_[i + 1] - pts_[i]) * u;
  }

  double heading_at(double s) const {
    const Vec2 t = tangent_of(segment_at(s));
    return std::atan2(t.y, t.x);
  }

  Projection project(Vec2 p) const { return project(p, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()); }

  /// Projection restricted to segments overlapping the arc-length window [s_lo, s_hi].
  Projection project(Vec2 p, double s_lo, double s_hi) const {
    Projection best;
    best.distance = std::numeric_limits<double>::infinity();
    std::size_t i0 = 0, i1 = pts_.size() < 2 ? 0 : pts_.size() - 1;
    if (pts_.size() >= 2) {
      i0 = segment_at(s_lo);
      i1 = std::min(pts_.size() - 1, segment_at(s_hi) + 1);
    }
    for (std::size_t i = i0; i + 1 < pts_.size() && i < i1; ++i) {
      const Vec2 a = pts_[i], d = pts_[i + 1] - pts_[i];
      const double len2 = d.dot(d);
      double u = len2 > 0.0 ? (p - a).dot(d) / len2 : 0.0;
      const bool first = i == 0, last = i + 2 == pts_.size();
      if (!first) u = std::max(u, 0.0);
      if (!last) u = std::min(u, 1.0);
      const Vec2 foot = a + d * u;
      const Vec2 off = p - foot;
      const double dist2 = off.dot(off);
      if (dist2 < best.distance) {
        best.distance = dist2;
        best.point = foot;
        best.segment = i;
        best.s = s_[i] + u * std::sqrt(len2);
        best.lateral = len2 > 0.0 ? d.cross(p - a) / std::sqrt(len2) : 0.0;
      }
    }
    best.distance = std::sqrt(best.distance);
    if (pts_.size() == 1) {
      best.point = pts_[0];
      best.distance = (p - pts_[0]).norm();
    }
    return best;
  }

  /// `count` points evenly spaced in arc length over [s0, s1].
  Polyline resampled(std::size_t count, double s0, double s1) const {
    std::vector<Vec2> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double u = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
      out.push_back(point_at(s0 + (s1 - s0) * u));
    }
    return Polyline(std::move(out));
  }

  /// Points spaced by `step` from s0 to s1 inclusive of both ends.
  Polyline cropped(double s0, double s1, double step) const {
    std::vector<Vec2> out;
    for (double s = s0; s < s1 - 1e-9; s += step) out.push_back(point_at(s));
    out.push_back(point_at(s1));
    return Polyline(std::move(out));
  }

  /// Curve shifted by `offset` along the left normal.
  Polyline offset(double d) const {
    std::vector<Vec2> out;
    out.reserve(pts_.size());
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      Vec2 t;
      if (i == 0) t = tangent_of(0);
      else if (i + 1 == pts_.size()) t = tangent_of(i - 1);
      else {
        const Vec2 a = tangent_of(i - 1), b = tangent_of(i);
        t = a + b;
        const double n = t.norm();
        t = n > 0.0 ? t * (1.0 / n) : a;
      }
      out.push_back(pts_[i] + Vec2{-t.y, t.x} * d);
    }
    return Polyline(std::move(out));
  }

  Polyline reversed() const { return Polyline(std::vector<Vec2>(pts_.rbegin(), pts_.rend())); }

  Polyline transformed(const Frame& f) const {
    std::vector<Vec2> out;
    out.reserve(pts_.size());
    for (auto p : pts_) out.push_back(f.to_local(p));
    return Polyline(std::move(out));
  }

 private:
  void rebuild() {
    s_.assign(pts_.size(), 0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) s_[i] = s_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
  }

  std::size_t segment_at(double s) const {
    if (pts_.size() < 2) return 0;
    auto it = std::upper_bound(s_.begin(), s_.end(), s);
    std::size_t i = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
    return std::min(i, pts_.size() - 2);
  }

  Vec2 tangent_of(std::size_t i) const {
    if (pts_.size() < 2) return {1.0, 0.0};
    const Vec2 d = pts_[i + 1] - pts_[i];
    const double n = d.norm();
    return n > 0.0 ? d * (1.0 / n) : Vec2{1.0, 0.0};
  }

  std::vector<Vec2> pts_;
  std::vector<double> s_;
};

/// Simple polygon, vertices in order (either winding).
struct Polygon {
  std::vector<Vec2> vertices;

  /// Even-odd ray cast; boundary points may land on either side.
  bool contains(Vec2 p) const {
    bool inside = false;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Vec2 a = vertices[i], b = vertices[j];
      if ((a.y > p.y) != (b.y > p.y)) {
        const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
        if (p.x < x) inside = !inside;
      }
    }
    return inside;
  }

  Polygon transformed(const Frame& f) const {
    Polygon out;
    out.vertices.reserve(vertices.size());
    for (auto v : vertices) out.vertices.push_back(f.to_local(v));
    return out;
  }
};

inline Polygon rectangle(double x0, double y0, double x1, double y1) {
  return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
}

/// Region enclosed between the left and right offsets of a center curve.
inline Polygon corridor(const Polyline& center, double left, double right) {
  const Polyline l = center.offset(left);
  const Polyline r = center.offset(-right);
  Polygon poly;
  poly.vertices = l.points();
  for (auto it = r.points().rbegin(); it != r.points().rend(); ++it) poly.vertices.push_back(*it);
  return poly;
}

}  // namespace carplan
