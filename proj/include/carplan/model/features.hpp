#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "carplan/numerics/tensor.hpp"
#include "carplan/scene/types.hpp"

namespace carplan {

/// Normalization constants for network inputs and outputs.
inline constexpr double kPositionScale = 20.0;  // m
inline constexpr double kVelocityScale = 10.0;  // m/s
inline constexpr double kSizeScale = 5.0;       // m

inline constexpr std::size_t kAvFeatures = 8;
inline constexpr std::size_t kAgentFeatures = 12;
inline constexpr std::size_t kMapFeatures = 7;
inline constexpr std::size_t kCenterlineFeatures = 4;

/// Network-ready view of one scenario in its own frame.
///
/// Agent histories are stacked as [N_a·T_h × F] with a per-row validity
/// flag; map points as [Σ points × F]. `agent_valid` / `map_valid` mark whole
/// tokens; invalid tokens are padding and never influence valid outputs.
struct SceneInputs {
  nn::Tensor av;  // [1 × kAvFeatures]
  nn::Tensor agent_steps;
  std::vector<std::uint8_t> agent_step_valid;
  std::vector<std::uint8_t> agent_valid;
  std::size_t history_steps = 0;
  nn::Tensor map_points;
  std::vector<std::size_t> map_offsets;  // size N_p + 1
  std::vector<std::uint8_t> map_valid;
  nn::Tensor centerline_points;
  std::vector<std::size_t> centerline_offsets;

  std::size_t num_agents() const { return agent_valid.size(); }
  std::size_t num_map() const { return map_valid.size(); }
  std::size_t num_centerlines() const { return centerline_offsets.empty() ? 0 : centerline_offsets.size() - 1; }
  std::size_t num_tokens() const { return 1 + num_agents() + num_map(); }
};

inline void push_agent_step(std::vector<double>& out, const AgentState& s, double rel_time) {
  const auto cat = static_cast<int>(s.category);
  out.insert(out.end(), {s.position.x / kPositionScale, s.position.y / kPositionScale, std::cos(s.heading),
                         std::sin(s.heading), s.velocity.x / kVelocityScale, s.velocity.y / kVelocityScale,
                         s.length / kSizeScale, s.width / kSizeScale, cat == 0 ? 1.0 : 0.0, cat == 1 ? 1.0 : 0.0,
                         cat == 2 ? 1.0 : 0.0, rel_time});
}

inline void push_polyline_points(std::vector<double>& out, const std::vector<Vec2>& pts, bool with_kind,
                                 PolylineKind kind) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 d = i + 1 < pts.size() ? pts[i + 1] - pts[i] : pts[i] - pts[i - 1];
    const double n = d.norm();
    const Vec2 u = n > 0.0 ? d * (1.0 / n) : Vec2{0.0, 0.0};
    out.insert(out.end(), {pts[i].x / kPositionScale, pts[i].y / kPositionScale, u.x, u.y});
    if (with_kind) {
      const auto k = static_cast<int>(kind);
      out.insert(out.end(), {k == 0 ? 1.0 : 0.0, k == 1 ? 1.0 : 0.0, k == 2 ? 1.0 : 0.0});
    }
  }
}

/// Builds inputs from the scenario's current step. Only the AV's t = 0 state
/// is read for the AV; agents contribute their last `history_steps` states.
inline SceneInputs build_inputs(const Scenario& s, std::size_t history_steps) {
  SceneInputs in;
  const auto now = static_cast<std::size_t>(s.current_index());
  const AgentState& av = s.av_now();
  in.av = nn::Tensor::matrix(1, kAvFeatures,
                             {av.position.x / kPositionScale, av.position.y / kPositionScale, std::cos(av.heading),
                              std::sin(av.heading), av.velocity.x / kVelocityScale, av.velocity.y / kVelocityScale,
                              av.length / kSizeScale, av.width / kSizeScale});

  in.history_steps = history_steps;
  std::vector<double> steps;
  for (const auto& a : s.agents) {
    in.agent_valid.push_back(a.valid[now]);
    for (std::size_t h = 0; h < history_steps; ++h) {
      const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(now) - static_cast<std::ptrdiff_t>(history_steps - 1 - h);
      const bool ok = idx >= 0 && a.valid[static_cast<std::size_t>(idx)];
      const double rel = -static_cast<double>(history_steps - 1 - h) / static_cast<double>(history_steps);
      if (ok) push_agent_step(steps, a.states[static_cast<std::size_t>(idx)], rel);
      else steps.insert(steps.end(), kAgentFeatures, 0.0);
      in.agent_step_valid.push_back(ok ? 1 : 0);
    }
  }
  in.agent_steps = nn::Tensor({s.agents.size() * history_steps, kAgentFeatures}, std::move(steps));

  std::vector<double> pts;
  in.map_offsets.push_back(0);
  for (const auto& m : s.map) {
    push_polyline_points(pts, m.points, true, m.kind);
    in.map_offsets.push_back(in.map_offsets.back() + m.points.size());
    in.map_valid.push_back(1);
  }
  in.map_points = nn::Tensor({in.map_offsets.back(), kMapFeatures}, std::move(pts));

  std::vector<double> cl;
  in.centerline_offsets.push_back(0);
  for (const auto& c : s.centerlines) {
    push_polyline_points(cl, c.points, false, PolylineKind::lane_center);
    in.centerline_offsets.push_back(in.centerline_offsets.back() + c.points.size());
  }
  in.centerline_points = nn::Tensor({in.centerline_offsets.back(), kCenterlineFeatures}, std::move(cl));
  return in;
}

/// Appends `agents` invalid agent tokens and `polylines` invalid map tokens.
inline SceneInputs with_padding(SceneInputs in, std::size_t agents, std::size_t polylines, double junk = 3.0) {
  auto& a = in.agent_steps.raw();
  for (std::size_t i = 0; i < agents; ++i) {
    in.agent_valid.push_back(0);
    for (std::size_t h = 0; h < in.history_steps; ++h) {
      a.insert(a.end(), kAgentFeatures, junk);
      in.agent_step_valid.push_back(1);
    }
  }
  in.agent_steps = nn::Tensor({in.agent_valid.size() * in.history_steps, kAgentFeatures}, a);
  auto& m = in.map_points.raw();
  for (std::size_t i = 0; i < polylines; ++i) {
    m.insert(m.end(), 2 * kMapFeatures, junk);
    in.map_offsets.push_back(in.map_offsets.back() + 2);
    in.map_valid.push_back(0);
  }
  in.map_points = nn::Tensor({in.map_offsets.back(), kMapFeatures}, m);
  return in;
}

/// Ground-truth AV future as [T_f × 3] (x, y, heading).
inline nn::Tensor av_future(const Scenario& s, std::size_t future_steps) {
  const auto now = static_cast<std::size_t>(s.current_index());
  if (s.av.states.size() < now + 1 + future_steps) throw ScenarioError("scenario future shorter than model horizon");
  nn::Tensor y({future_steps, 3});
  for (std::size_t t = 0; t < future_steps; ++t) {
    const auto& st = s.av.states[now + 1 + t];
    y.at(t, 0) = st.position.x;
    y.at(t, 1) = st.position.y;
    y.at(t, 2) = st.heading;
  }
  return y;
}

}  // namespace carplan
