#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carplan/model/planner.hpp"
#include "carplan/scene/geometry.hpp"
#include "carplan/scene/types.hpp"
#include "carplan/simulator/collision.hpp"
#include "carplan/simulator/traffic.hpp"

namespace carplan::sim {

enum class SimMode : std::uint8_t { non_reactive, reactive };
enum class Controller : std::uint8_t { log_replay, idm };
enum class EventKind : std::uint8_t { collision, off_road, arrival, planner_failure };

inline std::string_view to_string(SimMode m) { return m == SimMode::non_reactive ? "NR" : "R"; }
inline std::optional<SimMode> parse_sim_mode(std::string_view s) {
  if (s == "NR" || s == "nr") return SimMode::non_reactive;
  if (s == "R" || s == "r") return SimMode::reactive;
  return std::nullopt;
}
inline std::string_view to_string(Controller c) { return c == Controller::log_replay ? "log_replay" : "idm"; }
inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::collision: return "collision";
    case EventKind::off_road: return "off_road";
    case EventKind::arrival: return "arrival";
    case EventKind::planner_failure: return "planner_failure";
  }
  return "?";
}

/// World is the scenario frame. `route_s` is the ego arc position on the route.
struct SimState {
  int step = 0;
  AgentState ego;
  double route_s = 0.0;
  std::vector<AgentState> agents;
  std::vector<std::uint8_t> agent_valid;
  std::vector<Controller> controllers;
};

struct SimEvent {
  int step = 0;
  EventKind kind = EventKind::collision;
  int agent = -1;
  std::string detail;
};

/// One replanning call. Trajectories are in `frame`, the ego frame at `step`.
struct PlanRecord {
  int step = 0;
  Frame frame;
  PlanOutput plan;
};

struct RolloutTrace {
  std::uint64_t scenario_seed = 0;
  SimMode mode = SimMode::non_reactive;
  std::vector<SimState> states;
  std::vector<PlanRecord> plans;
  std::vector<SimEvent> events;
  /// Route position the expert reached over the same horizon.
  double expert_route_s = 0.0;
  double start_route_s = 0.0;
  bool aborted = false;
};

struct RolloutConfig {
  SimMode mode = SimMode::non_reactive;
  double horizon_s = 8.0;
  int replan_interval = 10;
  double max_accel = 4.0;
  double max_decel = 9.0;
  double max_curvature = 0.5;
  /// Pure-pursuit lookahead in seconds of travel.
  double lookahead_s = 0.5;
  /// Natural frequency of the speed loop, rad/s.
  double speed_bandwidth = 2.0;
  /// Fraction of expert progress that counts as arrival.
  double arrival_fraction = 0.95;
};

/// Planner callback: sees the observation window, expressed in `frame` (the
/// current ego frame), and returns a plan in that frame.
using PlanFn = std::function<PlanOutput(const Scenario& window, const Frame& frame, int step)>;

/// Steps simulated for a horizon; bounded by the logged future.
inline int rollout_steps(const Scenario& s, double horizon_s) {
  const int want = static_cast<int>(std::lround(horizon_s / kDt));
  return std::max(1, std::min(want, s.log_steps + 1));
}

/// Plan tracker. `ref[0]` is the pose the plan holds now, `ref[i]` the pose
/// due i ticks later. Steering is pure pursuit toward the first reference at
/// least `lookahead_s` of travel (and 2 m) away. Speed follows the plan's pace
/// with feed-forward acceleration and PD feedback on the along-track error.
/// A pursuit point behind the ego brakes toward a stop.
inline EgoControl track_plan(const AgentState& ego, std::span<const Vec2> ref, const RolloutConfig& c) {
  EgoControl u;
  if (ref.empty()) return u;
  const Frame f{ego.position, ego.heading};
  const double v = ego.speed();
  auto at = [&](std::size_t i) { return ref[std::min(i, ref.size() - 1)]; };
  const double reach = std::max(2.0, c.lookahead_s * v);
  Vec2 l = f.to_local(ref.back());
  for (std::size_t i = 1; i < ref.size(); ++i) {
    const Vec2 li = f.to_local(ref[i]);
    if (li.norm() >= reach) {
      l = li;
      break;
    }
  }
  if (l.x < 0.0) {
    u.accel = std::clamp(-v / kDt, -c.max_decel, 0.0);
    return u;
  }
  const double d2 = l.x * l.x + l.y * l.y;
  if (d2 > 1e-12) u.curvature = std::clamp(2.0 * l.y / d2, -c.max_curvature, c.max_curvature);
  const double pace0 = (at(1) - at(0)).norm() / kDt;
  const double pace1 = (at(2) - at(1)).norm() / kDt;
  const double behind = f.to_local(at(0)).x;
  const double w = c.speed_bandwidth;
  u.accel = (pace1 - pace0) / kDt + 2.0 * w * (pace0 - v) + w * w * behind;
  u.accel = std::clamp(u.accel, -c.max_decel, c.max_accel);
  return u;
}

/// Route tracker with a bounded search window, robust to self-approaching routes.
inline double advance_route_s(const Polyline& route, Vec2 p, double s_prev) {
  if (route.size() < 2) return 0.0;
  return route.project(p, s_prev - 5.0, s_prev + 25.0).s;
}

inline bool agent_collides(const AgentState& ego, const AgentState& agent) {
  return boxes_overlap(OrientedBox::of(ego), OrientedBox::of(agent));
}

/// Observation window ending at trace step `k`: logged states up to t = 0,
/// simulated states after it. Returned in the ego frame of step `k`.
inline Scenario observation_window(const Scenario& s, const std::vector<SimState>& sim, int k, Frame* frame_out = nullptr) {
  const int H = s.history_steps;
  const int now = s.current_index();
  Scenario w = s;
  w.history_steps = H;
  w.future_steps = 0;
  w.log_steps = 0;
  auto fill = [&](AgentTrack& dst, auto&& logged, auto&& simulated) {
    dst.states.assign(static_cast<std::size_t>(H), AgentState{});
    dst.valid.assign(static_cast<std::size_t>(H), 0);
    for (int i = 0; i < H; ++i) {
      const int abs = now + k - (H - 1) + i;
      if (abs < 0) continue;
      const auto slot = static_cast<std::size_t>(i);
      if (abs <= now) logged(static_cast<std::size_t>(abs), dst.states[slot], dst.valid[slot]);
      else simulated(sim[static_cast<std::size_t>(abs - now)], dst.states[slot], dst.valid[slot]);
    }
  };
  fill(
      w.av, [&](std::size_t i, AgentState& st, std::uint8_t& ok) { st = s.av.states[i], ok = s.av.valid[i]; },
      [&](const SimState& x, AgentState& st, std::uint8_t& ok) { st = x.ego, ok = 1; });
  for (std::size_t a = 0; a < s.agents.size(); ++a)
    fill(
        w.agents[a],
        [&](std::size_t i, AgentState& st, std::uint8_t& ok) { st = s.agents[a].states[i], ok = s.agents[a].valid[i]; },
        [&](const SimState& x, AgentState& st, std::uint8_t& ok) { st = x.agents[a], ok = x.agent_valid[a]; });

  // The route centerline starts at the ego, as it did at t = 0.
  if (!s.route.empty() && !w.centerlines.empty() && k > 0) {
    const Polyline route(s.route);
    const double s0 = sim[static_cast<std::size_t>(k)].route_s;
    if (route.length() > s0 + 1.0)
      w.centerlines[0].points = route.resampled(s.centerlines[0].points.size(), s0, route.length()).points();
  }
  const Frame f = av_frame(w);
  if (frame_out) *frame_out = f;
  return normalize_to_av_frame(w);
}

/// Plans with a learned model.
inline PlanFn model_planner(const Planner& p) {
  return [&p](const Scenario& window, const Frame&, int) { return p.plan(window); };
}

/// Replays the logged AV future as a one-mode plan. Past the log end the last
/// logged pose is held.
inline PlanFn expert_replay_planner(const Scenario& s, std::size_t future_steps) {
  return [&s, future_steps](const Scenario&, const Frame& f, int k) {
    const std::size_t now = static_cast<std::size_t>(s.current_index());
    const std::size_t last = s.av.states.size() - 1;
    PlanOutput p;
    p.trajectories = nn::Tensor({1, future_steps, 3});
    p.scores = nn::Tensor({1}, 0.0);
    for (std::size_t t = 0; t < future_steps; ++t) {
      const AgentState& st = s.av.states[std::min(last, now + static_cast<std::size_t>(k) + t + 1)];
      const Vec2 q = f.to_local(st.position);
      p.trajectories[t * 3 + 0] = q.x;
      p.trajectories[t * 3 + 1] = q.y;
      p.trajectories[t * 3 + 2] = f.heading_to_local(st.heading);
    }
    return p;
  };
}

namespace rollout_detail {

inline bool plan_finite(const PlanOutput& p) {
  if (p.trajectories.size() == 0 || p.scores.size() == 0) return false;
  if (p.trajectories.size() % (p.scores.size() * 3) != 0) return false;
  for (double v : p.trajectories.raw())
    if (!std::isfinite(v)) return false;
  for (double v : p.scores.raw())
    if (!std::isfinite(v)) return false;
  return true;
}

/// Best-mode waypoint `j` of a plan, in the world frame. Holds the last point.
inline Vec2 waypoint(const PlanRecord& r, std::size_t j) {
  const std::size_t m = r.plan.best_mode();
  const std::size_t tf = r.plan.trajectories.size() / (r.plan.modes() * 3);
  const std::size_t t = std::min(j, tf - 1);
  const std::size_t base = (m * tf + t) * 3;
  return r.frame.to_parent({r.plan.trajectories[base], r.plan.trajectories[base + 1]});
}

/// Reference poses from tick `j` of a plan: the pose due now, then `n` more.
/// Plans start one tick ahead, so on a replanning tick the current pose is
/// extrapolated back from the first two waypoints.
inline std::vector<Vec2> reference(const PlanRecord& r, std::size_t j, std::size_t n) {
  std::vector<Vec2> ref;
  ref.reserve(n + 1);
  ref.push_back(j == 0 ? waypoint(r, 0) * 2.0 - waypoint(r, 1) : waypoint(r, j - 1));
  for (std::size_t i = 0; i < n; ++i) ref.push_back(waypoint(r, j + i));
  return ref;
}

}  // namespace rollout_detail

/// Closed-loop rollout from t = 0. The ego follows the best-scored mode and
/// replans every `replan_interval` ticks. Agents replay their logs
/// (non-reactive) or drive their lanes under IDM (reactive).
inline RolloutTrace rollout(const PlanFn& planner, const Scenario& s, const RolloutConfig& cfg) {
  RolloutTrace tr;
  tr.scenario_seed = s.seed;
  tr.mode = cfg.mode;
  const int steps = rollout_steps(s, cfg.horizon_s);
  const std::size_t now = static_cast<std::size_t>(s.current_index());
  const Polyline route(s.route);

  tr.start_route_s = route.size() > 1 ? route.project(s.av_now().position).s : 0.0;
  {
    double es = tr.start_route_s;
    for (int k = 1; k < steps; ++k) es = advance_route_s(route, s.av.states[now + static_cast<std::size_t>(k)].position, es);
    tr.expert_route_s = es;
  }

  SimState st;
  st.ego = s.av_now();
  st.route_s = tr.start_route_s;
  std::vector<PathAgent> movers(s.agents.size());
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    const AgentTrack& t = s.agents[a];
    st.agents.push_back(t.states[now]);
    st.agent_valid.push_back(t.valid[now]);
    const bool reactive = cfg.mode == SimMode::reactive && t.path.size() >= 2 && t.valid[now];
    st.controllers.push_back(reactive ? Controller::idm : Controller::log_replay);
    if (!reactive) continue;
    PathAgent& m = movers[a];
    m.path = Polyline(t.path);
    m.profile = SpeedProfile(m.path, 2.5);
    m.s = m.path.project(t.states[now].position).s;
    m.v = t.states[now].speed();
    m.idm.desired_speed = t.desired_speed;
    m.length = t.states[now].length;
    m.width = t.states[now].width;
    m.category = t.states[now].category;
    m.yields = m.category != AgentCategory::pedestrian;
  }

  std::vector<std::uint8_t> touching(s.agents.size(), 0);
  bool off_road = false, arrived = false;
  const double expert_progress = tr.expert_route_s - tr.start_route_s;
  auto record_events = [&](const SimState& x) {
    for (std::size_t a = 0; a < x.agents.size(); ++a) {
      const bool hit = x.agent_valid[a] && agent_collides(x.ego, x.agents[a]);
      if (hit && !touching[a]) tr.events.push_back({x.step, EventKind::collision, static_cast<int>(a), ""});
      touching[a] = hit;
    }
    const bool out = !footprint_drivable(OrientedBox::of(x.ego), s.drivable_region);
    if (out && !off_road) tr.events.push_back({x.step, EventKind::off_road, -1, ""});
    off_road = out;
    if (!arrived && expert_progress > 0.0 && x.route_s - tr.start_route_s >= cfg.arrival_fraction * expert_progress) {
      arrived = true;
      tr.events.push_back({x.step, EventKind::arrival, -1, ""});
    }
  };
  tr.states.push_back(st);
  record_events(st);

  for (int k = 0; k + 1 < steps; ++k) {
    const SimState& cur = tr.states.back();
    if (k % std::max(1, cfg.replan_interval) == 0) {
      PlanRecord rec;
      rec.step = k;
      try {
        const Scenario window = observation_window(s, tr.states, k, &rec.frame);
        rec.plan = planner(window, rec.frame, k);
      } catch (const std::exception& e) {
        tr.events.push_back({k, EventKind::planner_failure, -1, e.what()});
        tr.aborted = true;
        break;
      }
      if (!rollout_detail::plan_finite(rec.plan)) {
        tr.events.push_back({k, EventKind::planner_failure, -1, "malformed or non-finite plan"});
        tr.aborted = true;
        break;
      }
      tr.plans.push_back(std::move(rec));
    }
    const PlanRecord& plan = tr.plans.back();
    const auto ref = rollout_detail::reference(plan, static_cast<std::size_t>(k - plan.step), 20);
    const EgoControl u = track_plan(cur.ego, ref, cfg);

    SimState next;
    next.step = k + 1;
    next.ego = integrate_unicycle(cur.ego, u.accel, u.curvature, kDt);
    next.route_s = advance_route_s(route, next.ego.position, cur.route_s);
    next.controllers = cur.controllers;
    next.agents = cur.agents;
    next.agent_valid = cur.agent_valid;

    std::vector<Obstacle> obs;
    for (std::size_t a = 0; a < cur.agents.size(); ++a)
      if (cur.agent_valid[a]) obs.push_back(Obstacle::of(cur.agents[a]));
    obs.push_back(Obstacle::of(cur.ego));
    std::vector<double> acc(cur.agents.size(), 0.0);
    for (std::size_t a = 0, oi = 0; a < cur.agents.size(); ++a) {
      if (!cur.agent_valid[a]) continue;
      const std::size_t self = oi++;
      if (cur.controllers[a] != Controller::idm) continue;
      std::vector<Obstacle> others;
      for (std::size_t j = 0; j < obs.size(); ++j)
        if (j != self) others.push_back(obs[j]);
      acc[a] = movers[a].accel(others);
    }
    for (std::size_t a = 0; a < cur.agents.size(); ++a) {
      if (cur.controllers[a] == Controller::idm) {
        movers[a].advance(acc[a], kDt);
        next.agents[a] = movers[a].state();
      } else {
        const std::size_t i = now + static_cast<std::size_t>(k) + 1;
        next.agents[a] = s.agents[a].states[i];
        next.agent_valid[a] = s.agents[a].valid[i];
      }
    }
    tr.states.push_back(std::move(next));
    record_events(tr.states.back());
  }
  return tr;
}

}  // namespace carplan::sim
