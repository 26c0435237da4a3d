#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

namespace carplan::sim {

/// Intelligent Driver Model parameters.
struct IdmParams {
  double desired_speed = 15.0;   // v0, m/s
  double min_gap = 2.0;          // s0, m
  double time_headway = 1.5;     // T, s
  double max_accel = 1.5;        // a_max, m/s²
  double comfort_decel = 2.0;    // b, m/s²
  double exponent = 4.0;         // δ
  double max_decel = 9.0;        // b_max, emergency clamp, m/s²
};

/// The vehicle ahead, if any: its speed and the bumper-to-bumper gap.
struct Leader {
  double speed = 0.0;
  double gap = 0.0;
};

/// Desired dynamical gap s*.
inline double idm_desired_gap(double v, double v_lead, const IdmParams& p) {
  return p.min_gap + v * p.time_headway + v * (v - v_lead) / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
}

/// a = a_max·[1 − (v/v0)^δ − (s*/gap)²], clamped to [−b_max, a_max].
/// A non-positive gap yields the emergency value −b_max.
inline double idm_accel(double v, std::optional<Leader> leader, const IdmParams& p) {
  const double v0 = std::max(p.desired_speed, 1e-3);
  double a = p.max_accel * (1.0 - std::pow(std::max(v, 0.0) / v0, p.exponent));
  if (leader) {
    if (leader->gap <= 0.0) return -p.max_decel;
    const double s_star = std::max(0.0, idm_desired_gap(v, leader->speed, p));
    a -= p.max_accel * (s_star / leader->gap) * (s_star / leader->gap);
  }
  return std::clamp(a, -p.max_decel, p.max_accel);
}

/// Longitudinal advance over one tick with speed floored at zero.
struct LongitudinalStep {
  double distance = 0.0;
  double speed = 0.0;
};

inline LongitudinalStep integrate_longitudinal(double v, double a, double dt) {
  const double v_next = v + a * dt;
  if (v_next >= 0.0) return {0.5 * (v + v_next) * dt, v_next};
  // Stops within the tick.
  return {a < 0.0 ? -v * v / (2.0 * a) : 0.0, 0.0};
}

}  // namespace carplan::sim
