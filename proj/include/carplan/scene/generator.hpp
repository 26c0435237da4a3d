#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "carplan/scene/geometry.hpp"
#include "carplan/scene/types.hpp"
#include "carplan/simulator/collision.hpp"
#include "carplan/simulator/traffic.hpp"

namespace carplan {

struct GeneratorConfig {
  std::vector<Topology> topologies{Topology::straight, Topology::curved, Topology::intersection, Topology::lane_change};
  int min_agents = 2;
  int max_agents = 8;
  double min_speed = 6.0;   // m/s, desired speeds of AV and vehicles
  double max_speed = 14.0;
  int history_steps = 20;
  int future_steps = 40;
  int log_steps = 80;
  int max_agents_cap = 16;
  int max_polylines = 32;
  int polyline_points = 20;
  int centerline_points = 20;
  int max_centerlines = 4;
  double perception_radius = 80.0;
  /// Puts one agent in the AV lane ahead, driving at a speed from the lead range.
  bool force_lead = false;
  double lead_min_speed = 2.0;
  double lead_max_speed = 4.0;
  int max_attempts = 64;
};

class GenerationError : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};

namespace gen_detail {

constexpr double kLaneWidth = 3.5;
constexpr double kPathStep = 1.0;
constexpr double kMapStep = 5.0;

inline Polyline line(Vec2 a, Vec2 b, double step = kPathStep) {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) pts.push_back(a + (b - a) * (static_cast<double>(i) / n));
  return Polyline(std::move(pts));
}

inline void append(std::vector<Vec2>& dst, const std::vector<Vec2>& src) {
  for (const auto& p : src)
    if (dst.empty() || (p - dst.back()).norm() > 1e-9) dst.push_back(p);
}

/// Arc from `start` with initial heading `h0`, signed curvature `k`, length `len`.
inline std::vector<Vec2> arc_points(Vec2 start, double h0, double k, double len, double step = kPathStep) {
  std::vector<Vec2> pts;
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    const double s = len * i / n;
    if (std::abs(k) < 1e-12) {
      pts.push_back(start + Vec2{std::cos(h0), std::sin(h0)} * s);
    } else {
      const double h = h0 + k * s;
      pts.push_back(start + Vec2{(std::sin(h) - std::sin(h0)) / k, -(std::cos(h) - std::cos(h0)) / k});
    }
  }
  return pts;
}

/// Path from `from` switching onto `to` over [s0, s0 + span] (arc length on `from`).
inline Polyline lane_switch(const Polyline& from, const Polyline& to, double s0, double span) {
  std::vector<Vec2> pts;
  for (double s = 0.0; s <= from.length() + 1e-9; s += kPathStep) {
    const Vec2 a = from.point_at(s);
    const Vec2 b = to.point_at(to.project(a).s);
    double u = std::clamp((s - s0) / span, 0.0, 1.0);
    u = 0.5 - 0.5 * std::cos(std::numbers::pi * u);
    append(pts, {a + (b - a) * u});
  }
  return Polyline(std::move(pts));
}

/// Splits a curve into map polylines of at most `points` vertices at kMapStep spacing.
inline void chunk(const Polyline& curve, PolylineKind kind, int points, std::vector<MapPolyline>& out) {
  const double span = kMapStep * (points - 1);
  for (double s0 = 0.0; s0 < curve.length() - 1e-6; s0 += span) {
    const double s1 = std::min(curve.length(), s0 + span);
    if (s1 - s0 < 1.0) break;
    MapPolyline m;
    m.kind = kind;
    m.points = curve.cropped(s0, s1, kMapStep).points();
    out.push_back(std::move(m));
  }
}

struct LaneSpec {
  Polyline path;
  /// Arc-length window along the lane where agents may start.
  double window_begin = 0.0;
  double window_end = 0.0;
  bool av_lane = false;
  bool pedestrian = false;
};

struct Layout {
  std::vector<LaneSpec> lanes;
  std::vector<MapPolyline> map;
  std::vector<Polygon> drivable;
  Polyline route;
  std::vector<Polyline> alternatives;
  double av_start_s = 0.0;
  double goal_s = 0.0;
};

inline Layout straight_layout(std::mt19937_64& rng, bool lane_change, int pts) {
  Layout L;
  const Polyline l0 = line({-150, 0}, {450, 0});
  const Polyline l1 = line({-150, kLaneWidth}, {450, kLaneWidth});
  L.av_start_s = 150.0;
  L.goal_s = L.av_start_s + 320.0;
  if (lane_change) {
    std::uniform_real_distribution<double> u(25.0, 60.0);
    L.route = lane_switch(l0, l1, L.av_start_s + u(rng), 40.0);
    L.alternatives.push_back(lane_switch(l0, l1, L.goal_s - 80.0, 40.0));
  } else {
    L.route = l0;
    L.alternatives.push_back(lane_switch(l1, l0, L.goal_s - 80.0, 40.0));
  }
  L.lanes.push_back({l0, L.av_start_s - 60.0, L.av_start_s + 110.0, true, false});
  L.lanes.push_back({l1, L.av_start_s - 60.0, L.av_start_s + 110.0, false, false});
  chunk(l0, PolylineKind::lane_center, pts, L.map);
  chunk(l1, PolylineKind::lane_center, pts, L.map);
  chunk(line({-150, -1.75}, {450, -1.75}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({-150, 5.25}, {450, 5.25}), PolylineKind::road_boundary, pts, L.map);
  L.drivable.push_back(rectangle(-150, -1.75, 450, 5.25));
  return L;
}

inline Layout curved_layout(std::mt19937_64& rng, int pts) {
  Layout L;
  std::uniform_real_distribution<double> radius(100.0, 250.0);
  std::bernoulli_distribution left(0.5);
  const double k = (left(rng) ? 1.0 : -1.0) / radius(rng);
  const double arc_len = std::min(450.0, 2.5 / std::abs(k));
  std::vector<Vec2> c = line({-150, 0}, {150, 0}).points();
  append(c, arc_points({150, 0}, 0.0, k, arc_len));
  const double h_end = k * arc_len;
  const Vec2 end = c.back();
  append(c, arc_points(end, h_end, 0.0, std::max(0.0, 450.0 - arc_len)));
  const Polyline center(std::move(c));
  const Polyline l1 = center.offset(kLaneWidth);
  L.av_start_s = 150.0 - 40.0;
  L.goal_s = L.av_start_s + 320.0;
  L.route = center;
  L.alternatives.push_back(lane_switch(l1, center, L.goal_s - 80.0, 40.0));
  L.lanes.push_back({center, L.av_start_s - 60.0, L.av_start_s + 110.0, true, false});
  const double s1 = l1.project(center.point_at(L.av_start_s)).s;
  L.lanes.push_back({l1, s1 - 60.0, s1 + 110.0, false, false});
  chunk(center, PolylineKind::lane_center, pts, L.map);
  chunk(l1, PolylineKind::lane_center, pts, L.map);
  chunk(center.offset(-1.75), PolylineKind::road_boundary, pts, L.map);
  chunk(center.offset(kLaneWidth + 1.75), PolylineKind::road_boundary, pts, L.map);
  L.drivable.push_back(corridor(center, kLaneWidth + 1.75, 1.75));
  return L;
}

inline Layout intersection_layout(std::mt19937_64& rng, int pts) {
  Layout L;
  std::uniform_real_distribution<double> ux(60.0, 90.0);
  const double x0 = ux(rng);
  const double hw = kLaneWidth;  // road half width, two lanes
  const Polyline east = line({-150, -1.75}, {450, -1.75});
  const Polyline west = line({450, 1.75}, {-150, 1.75});
  const Polyline north = line({x0 + 1.75, -200}, {x0 + 1.75, 300});
  const Polyline south = line({x0 - 1.75, 300}, {x0 - 1.75, -200});

  std::uniform_int_distribution<int> turn(0, 2);
  const int maneuver = turn(rng);
  L.av_start_s = 150.0;
  if (maneuver == 0) {
    L.route = east;
  } else if (maneuver == 1) {  // left into the northbound lane
    const double r = 9.0;
    std::vector<Vec2> p = line({-150, -1.75}, {x0 + 1.75 - r, -1.75}).points();
    append(p, arc_points({x0 + 1.75 - r, -1.75}, 0.0, 1.0 / r, 0.5 * std::numbers::pi * r));
    append(p, line({x0 + 1.75, -1.75 + r}, {x0 + 1.75, 300}).points());
    L.route = Polyline(std::move(p));
  } else {  // right into the southbound lane
    const double r = 6.0;
    std::vector<Vec2> p = line({-150, -1.75}, {x0 - 1.75 - r, -1.75}).points();
    append(p, arc_points({x0 - 1.75 - r, -1.75}, 0.0, -1.0 / r, 0.5 * std::numbers::pi * r));
    append(p, line({x0 - 1.75, -1.75 - r}, {x0 - 1.75, -200}).points());
    L.route = Polyline(std::move(p));
  }
  L.goal_s = std::min(L.av_start_s + 320.0, L.route.length() - 5.0);

  L.lanes.push_back({east, L.av_start_s - 60.0, L.av_start_s + std::min(110.0, x0 - 20.0), true, false});
  const double sw = west.project({x0, 1.75}).s;
  L.lanes.push_back({west, sw - 110.0, sw - 15.0, false, false});
  const double sn = north.project({x0, 0}).s;
  L.lanes.push_back({north, sn - 110.0, sn - 25.0, false, false});
  const double ss = south.project({x0, 0}).s;
  L.lanes.push_back({south, ss - 110.0, ss - 25.0, false, false});
  const Polyline cw_west = line({x0 - 8.0, -hw - 1.0}, {x0 - 8.0, hw + 1.0});
  const Polyline cw_east = line({x0 + 8.0, hw + 1.0}, {x0 + 8.0, -hw - 1.0});
  L.lanes.push_back({cw_west, 0.0, cw_west.length(), false, true});
  L.lanes.push_back({cw_east, 0.0, cw_east.length(), false, true});

  for (const auto* lane : {&east, &west, &north, &south}) chunk(*lane, PolylineKind::lane_center, pts, L.map);
  chunk(line({-150, -hw}, {x0 - hw, -hw}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({x0 + hw, -hw}, {450, -hw}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({-150, hw}, {x0 - hw, hw}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({x0 + hw, hw}, {450, hw}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({x0 - hw, -200}, {x0 - hw, -hw}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({x0 - hw, hw}, {x0 - hw, 300}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({x0 + hw, -200}, {x0 + hw, -hw}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({x0 + hw, hw}, {x0 + hw, 300}), PolylineKind::road_boundary, pts, L.map);
  chunk(line({x0 - 8.0, -hw}, {x0 - 8.0, hw}, kMapStep), PolylineKind::crosswalk, pts, L.map);
  chunk(line({x0 + 8.0, -hw}, {x0 + 8.0, hw}, kMapStep), PolylineKind::crosswalk, pts, L.map);

  L.drivable.push_back(rectangle(-150, -hw, 450, hw));
  L.drivable.push_back(rectangle(x0 - hw, -200, x0 + hw, 300));
  L.drivable.push_back(rectangle(x0 - 12.0, -12.0, x0 + 12.0, 12.0));
  return L;
}

struct PlacedAgent {
  std::size_t lane = 0;
  double s = 0.0;
  double speed = 0.0;
  AgentCategory category = AgentCategory::vehicle;
  double length = 4.5;
  double width = 2.0;
};

inline double spacing_for(double follower_speed, const sim::IdmParams& idm) {
  return idm.min_gap + follower_speed * idm.time_headway;
}

}  // namespace gen_detail

/// Deterministic synthetic episode with a scripted-expert AV demonstration.
///
/// Candidates are rolled out and rejected if the expert collides or leaves the
/// drivable region; the accepted sample is a pure function of (config, seed).
inline Scenario generate_scenario(const GeneratorConfig& cfg, std::uint64_t seed) {
  using namespace gen_detail;
  if (cfg.topologies.empty()) throw GenerationError("generator config names no topology");
  if (cfg.max_agents > cfg.max_agents_cap)
    throw GenerationError("max_agents " + std::to_string(cfg.max_agents) + " exceeds cap " +
                          std::to_string(cfg.max_agents_cap));
  if (cfg.min_agents < 0 || cfg.min_agents > cfg.max_agents) throw GenerationError("invalid agent count range");
  if (!(cfg.min_speed > 0.0) || cfg.min_speed > cfg.max_speed) throw GenerationError("invalid speed range");
  if (cfg.future_steps > cfg.log_steps) throw GenerationError("future_steps exceeds log_steps");
  if (cfg.history_steps < 1) throw GenerationError("history_steps must be positive");

  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x51ED27);
  int spacing_failures = 0;
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    std::uniform_int_distribution<std::size_t> pick_topo(0, cfg.topologies.size() - 1);
    const Topology topo = cfg.topologies[pick_topo(rng)];
    Layout L;
    switch (topo) {
      case Topology::straight: L = straight_layout(rng, false, cfg.polyline_points); break;
      case Topology::lane_change: L = straight_layout(rng, true, cfg.polyline_points); break;
      case Topology::curved: L = curved_layout(rng, cfg.polyline_points); break;
      case Topology::intersection: L = intersection_layout(rng, cfg.polyline_points); break;
    }

    std::uniform_real_distribution<double> speed(cfg.min_speed, cfg.max_speed);
    sim::IdmParams base_idm;
    const double av_speed = speed(rng);

    // Agent placement: assign lanes, then spread agents with at least the IDM
    // equilibrium spacing; leftover room is distributed at random.
    std::uniform_int_distribution<int> count_dist(cfg.min_agents, cfg.max_agents);
    const int n_agents = count_dist(rng);
    std::vector<std::vector<PlacedAgent>> per_lane(L.lanes.size());
    std::vector<std::size_t> vehicle_lanes, ped_lanes;
    for (std::size_t i = 0; i < L.lanes.size(); ++i) (L.lanes[i].pedestrian ? ped_lanes : vehicle_lanes).push_back(i);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int a = 0; a < n_agents; ++a) {
      PlacedAgent p;
      const bool lead = cfg.force_lead && a == 0;
      if (!lead && !ped_lanes.empty() && unit(rng) < 0.2) {
        p.lane = ped_lanes[static_cast<std::size_t>(unit(rng) * ped_lanes.size()) % ped_lanes.size()];
        p.category = AgentCategory::pedestrian;
        p.speed = 1.0 + 0.6 * unit(rng);
        p.length = 0.6;
        p.width = 0.6;
      } else {
        // With a forced lead, the AV lane holds only the lead vehicle.
        std::vector<std::size_t> choices = vehicle_lanes;
        if (cfg.force_lead && choices.size() > 1) choices.erase(choices.begin());
        p.lane = lead ? 0 : choices[static_cast<std::size_t>(unit(rng) * choices.size()) % choices.size()];
        if (!lead && unit(rng) < 0.1) {
          p.category = AgentCategory::bicycle;
          p.speed = 4.0 + 2.0 * unit(rng);
          p.length = 1.8;
          p.width = 0.7;
        } else {
          p.speed = lead ? std::uniform_real_distribution<double>(cfg.lead_min_speed, cfg.lead_max_speed)(rng) : speed(rng);
          p.length = 4.2 + 0.8 * unit(rng);
          p.width = 1.8 + 0.3 * unit(rng);
        }
      }
      per_lane[p.lane].push_back(p);
    }

    const double av_len = 4.6, av_wid = 2.0;
    bool infeasible = false;
    std::vector<PlacedAgent> placed;
    for (std::size_t li = 0; li < L.lanes.size(); ++li) {
      auto& group = per_lane[li];
      if (group.empty()) continue;
      const LaneSpec& lane = L.lanes[li];
      if (lane.pedestrian) {
        for (auto& p : group) {
          p.s = lane.window_begin + unit(rng) * (lane.window_end - lane.window_begin);
          placed.push_back(p);
        }
        continue;
      }
      // The AV lane is split around the AV: everything forced or sampled "ahead" goes in front.
      std::vector<PlacedAgent> ahead, behind;
      for (std::size_t k = 0; k < group.size(); ++k) {
        const bool front = !lane.av_lane || cfg.force_lead || unit(rng) < 0.7;
        (front ? ahead : behind).push_back(group[k]);
      }
      auto fill = [&](std::vector<PlacedAgent>& g, double begin, double end, bool reverse) {
        if (g.empty()) return;
        // Required room: follower spacing between consecutive agents and the bounding occupants.
        double need = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) need += g[k].length + spacing_for(std::max(g[k].speed, av_speed), base_idm);
        const double room = end - begin;
        if (need > room) {
          infeasible = true;
          return;
        }
        std::vector<double> w(g.size() + 1);
        double tot = 0.0;
        for (auto& x : w) tot += (x = unit(rng) + 1e-3);
        double cursor = begin;
        for (std::size_t k = 0; k < g.size(); ++k) {
          const std::size_t idx = reverse ? g.size() - 1 - k : k;
          cursor += (room - need) * w[k] / tot;
          const double gap = spacing_for(std::max(g[idx].speed, av_speed), base_idm);
          g[idx].s = reverse ? cursor + g[idx].length * 0.5 : cursor + gap + g[idx].length * 0.5;
          cursor += gap + g[idx].length;
          placed.push_back(g[idx]);
        }
      };
      if (lane.av_lane) {
        const double ahead_end = cfg.force_lead ? L.av_start_s + 70.0 : lane.window_end;
        fill(ahead, L.av_start_s + 0.5 * av_len, std::max(ahead_end, L.av_start_s + 0.5 * av_len), false);
        fill(behind, lane.window_begin, L.av_start_s - 0.5 * av_len, true);
      } else {
        fill(ahead, lane.window_begin, lane.window_end, false);
      }
    }
    if (infeasible) {
      spacing_failures++;
      continue;
    }

    // Roll out the whole episode in the layout frame.
    const int total = cfg.history_steps + cfg.log_steps;
    sim::IdmParams av_idm = base_idm;
    av_idm.desired_speed = av_speed;
    const sim::ScriptedExpert expert(L.route, av_idm);
    AgentState av;
    av.position = L.route.point_at(L.av_start_s);
    av.heading = wrap_angle(L.route.heading_at(L.av_start_s));
    av.velocity = Vec2{std::cos(av.heading), std::sin(av.heading)} * av_speed;
    av.length = av_len;
    av.width = av_wid;

    std::vector<sim::PathAgent> movers;
    for (const auto& p : placed) {
      sim::PathAgent m;
      m.path = L.lanes[p.lane].path;
      m.profile = sim::SpeedProfile(m.path, 2.5);
      m.s = p.s;
      m.v = p.speed;
      m.idm = base_idm;
      m.idm.desired_speed = p.speed;
      m.length = p.length;
      m.width = p.width;
      m.category = p.category;
      m.yields = p.category != AgentCategory::pedestrian;
      movers.push_back(std::move(m));
    }

    std::vector<AgentState> av_log;
    std::vector<std::vector<AgentState>> agent_log(movers.size());
    bool rejected = false;
    for (int step = 0; step < total && !rejected; ++step) {
      av_log.push_back(av);
      std::vector<sim::Obstacle> obs;
      obs.reserve(movers.size() + 1);
      for (std::size_t i = 0; i < movers.size(); ++i) {
        agent_log[i].push_back(movers[i].state());
        obs.push_back(sim::Obstacle::of(agent_log[i].back()));
      }
      const auto av_box = sim::OrientedBox::of(av);
      if (!sim::footprint_drivable(av_box, L.drivable)) rejected = true;
      for (const auto& st : obs)
        if (sim::boxes_overlap(av_box, sim::OrientedBox{st.position, st.heading, st.length, st.width})) rejected = true;
      if (step + 1 == total) break;
      const AgentState av_next = expert.step(av, obs);
      obs.push_back(sim::Obstacle::of(av));
      std::vector<double> acc(movers.size());
      for (std::size_t i = 0; i < movers.size(); ++i) {
        std::vector<sim::Obstacle> others;
        others.reserve(obs.size());
        for (std::size_t j = 0; j < obs.size(); ++j)
          if (j != i) others.push_back(obs[j]);
        acc[i] = movers[i].accel(others);
      }
      for (std::size_t i = 0; i < movers.size(); ++i) movers[i].advance(acc[i], kDt);
      av = av_next;
    }
    if (rejected) continue;

    // Assemble in the layout frame, then normalize.
    Scenario sc;
    sc.seed = seed;
    sc.topology = topo;
    sc.history_steps = cfg.history_steps;
    sc.future_steps = cfg.future_steps;
    sc.log_steps = cfg.log_steps;
    sc.av.states = av_log;
    sc.av.valid.assign(av_log.size(), 1);
    sc.av.path = L.route.points();
    sc.av.desired_speed = av_speed;
    const int now = cfg.history_steps - 1;
    const Vec2 av_now = av_log[static_cast<std::size_t>(now)].position;
    for (std::size_t i = 0; i < movers.size(); ++i) {
      if ((agent_log[i][static_cast<std::size_t>(now)].position - av_now).norm() > cfg.perception_radius) continue;
      AgentTrack t;
      t.states = agent_log[i];
      t.valid.assign(t.states.size(), 1);
      for (std::size_t k = 0; k < t.states.size(); ++k)
        if ((t.states[k].position - av_log[k].position).norm() > cfg.perception_radius) {
          t.valid[k] = 0;
          const AgentCategory cat = t.states[k].category;
          t.states[k] = AgentState{{0, 0}, 0.0, {0, 0}, movers[i].length, movers[i].width, cat};
        }
      t.path = movers[i].path.points();
      t.desired_speed = movers[i].idm.desired_speed;
      sc.agents.push_back(std::move(t));
    }

    std::vector<MapPolyline> map = L.map;
    auto dist_to_av = [&](const MapPolyline& m) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& p : m.points) d = std::min(d, (p - av_now).norm());
      return d;
    };
    if (static_cast<int>(map.size()) > cfg.max_polylines) {
      std::vector<std::pair<double, std::size_t>> order;
      for (std::size_t i = 0; i < map.size(); ++i) order.emplace_back(dist_to_av(map[i]), i);
      std::stable_sort(order.begin(), order.end());
      std::vector<std::size_t> keep;
      for (int i = 0; i < cfg.max_polylines; ++i) keep.push_back(order[static_cast<std::size_t>(i)].second);
      std::sort(keep.begin(), keep.end());
      std::vector<MapPolyline> kept;
      for (auto i : keep) kept.push_back(map[i]);
      map = std::move(kept);
    }
    sc.map = std::move(map);
    sc.drivable_region = L.drivable;

    const double s_now = L.route.project(av_now).s;
    sc.goal = L.route.point_at(L.goal_s);
    sc.route = L.route.cropped(std::max(0.0, L.av_start_s - 10.0), L.goal_s, kPathStep).points();
    const auto cl_count = static_cast<std::size_t>(cfg.centerline_points);
    sc.centerlines.push_back(Centerline{L.route.resampled(cl_count, s_now, L.goal_s).points()});
    for (const auto& alt : L.alternatives) {
      if (static_cast<int>(sc.centerlines.size()) >= cfg.max_centerlines) break;
      const double a0 = alt.project(av_now).s;
      const double a1 = alt.project(sc.goal).s;
      if (a1 <= a0 + 1.0) continue;
      sc.centerlines.push_back(Centerline{alt.resampled(cl_count, a0, a1).points()});
    }
    return normalize_to_av_frame(sc);
  }
  if (spacing_failures == cfg.max_attempts)
    throw GenerationError("agents cannot fit at the required spacing on a lane (reduce agents or speeds)");
  throw GenerationError("no collision-free expert demonstration after " + std::to_string(cfg.max_attempts) +
                        " attempts for seed " + std::to_string(seed));
}

}  // namespace carplan
