#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "carplan/numerics/tensor.hpp"
#include "carplan/scene/types.hpp"

namespace carplan {

/// Ground-truth displacements of scene elements relative to the AV future.
struct DisplacementTargets {
  /// [(N_a + N_p) × T_f × 2], agents first, then map polylines.
  nn::Tensor values;
  /// [(N_a + N_p) × T_f]; 0 where an agent has no valid logged state.
  nn::Tensor mask;
};

/// Polyline point nearest to `p`; the first such point on ties.
inline Vec2 nearest_point(const std::vector<Vec2>& pts, Vec2 p) {
  Vec2 best = pts.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (auto q : pts) {
    const double d = (q - p).norm();
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  return best;
}

/// Agents: x_a^t − x_0^t, holding the last valid position across gaps and
/// masking those steps. Map polylines: static nearest-to-AV point − x_0^t.
inline DisplacementTargets compute_displacement_targets(const Scenario& s) {
  const auto tf = static_cast<std::size_t>(s.future_steps);
  const auto now = static_cast<std::size_t>(s.current_index());
  const std::size_t na = s.agents.size(), np = s.map.size();
  if (s.av.states.size() < now + 1 + tf) throw ScenarioError("AV track shorter than the supervised horizon");
  for (std::size_t t = 1; t <= tf; ++t)
    if (!s.av.valid[now + t]) throw ScenarioError("AV future invalid within the supervised horizon");

  DisplacementTargets out{nn::Tensor::zeros({na + np, tf, 2}), nn::Tensor::zeros({na + np, tf})};
  auto& v = out.values.raw();
  auto& m = out.mask.raw();
  for (std::size_t a = 0; a < na; ++a) {
    const AgentTrack& tr = s.agents[a];
    Vec2 held = tr.states[now].position;
    bool have = tr.valid[now] != 0;
    for (std::size_t i = 0; i <= now; ++i)
      if (tr.valid[i]) {
        held = tr.states[i].position;
        have = true;
      }
    for (std::size_t t = 0; t < tf; ++t) {
      const std::size_t k = now + 1 + t;
      const bool ok = k < tr.states.size() && tr.valid[k];
      if (ok) held = tr.states[k].position;
      const Vec2 d = held - s.av.states[k].position;
      v[(a * tf + t) * 2] = d.x;
      v[(a * tf + t) * 2 + 1] = d.y;
      m[a * tf + t] = (ok && have) ? 1.0 : 0.0;
    }
  }
  const Vec2 av0 = s.av.states[now].position;
  for (std::size_t p = 0; p < np; ++p) {
    const Vec2 rep = nearest_point(s.map[p].points, av0);
    const std::size_t row = na + p;
    for (std::size_t t = 0; t < tf; ++t) {
      const Vec2 d = rep - s.av.states[now + 1 + t].position;
      v[(row * tf + t) * 2] = d.x;
      v[(row * tf + t) * 2 + 1] = d.y;
      m[row * tf + t] = 1.0;
    }
  }
  return out;
}

}  // namespace carplan
