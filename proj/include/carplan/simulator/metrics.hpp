#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carplan/simulator/rollout.hpp"

namespace carplan::sim {

/// RMS longitudinal jerk (m/s³) up to which comfort is full, and where it reaches 0.
inline constexpr double kComfortJerkFull = 4.13;
inline constexpr double kComfortJerkZero = 8.26;

struct MetricsReport {
  std::uint64_t scenario_seed = 0;
  SimMode mode = SimMode::non_reactive;
  int collision_free = 1;
  int drivable_compliance = 1;
  double progress_ratio = 0.0;
  int arrived = 0;
  double comfort_rms_jerk = 0.0;
  double comfort_score = 1.0;
  double composite = 0.0;
  int steps = 0;
  int aborted = 0;
};

inline double comfort_score(double rms_jerk) {
  if (rms_jerk <= kComfortJerkFull) return 1.0;
  return std::max(0.0, 1.0 - (rms_jerk - kComfortJerkFull) / (kComfortJerkZero - kComfortJerkFull));
}

/// RMS of the second finite difference of speed over dt².
inline double rms_longitudinal_jerk(const std::vector<double>& speeds, double dt = kDt) {
  if (speeds.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 2; i < speeds.size(); ++i) {
    const double j = (speeds[i] - 2.0 * speeds[i - 1] + speeds[i - 2]) / (dt * dt);
    acc += j * j;
  }
  return std::sqrt(acc / static_cast<double>(speeds.size() - 2));
}

/// Gate (collision or off-road gives 0) times 0.8·progress + 0.2·comfort, on [0, 100].
inline double composite_score(int collision_free, int compliance, double progress, double comfort) {
  if (!collision_free || !compliance) return 0.0;
  return 100.0 * (0.8 * progress + 0.2 * comfort);
}

/// Scores a trace from its states; events are not consulted.
inline MetricsReport score(const RolloutTrace& tr, const Scenario& s, double arrival_fraction = 0.95) {
  MetricsReport r;
  r.scenario_seed = tr.scenario_seed;
  r.mode = tr.mode;
  r.steps = static_cast<int>(tr.states.size());
  r.aborted = tr.aborted ? 1 : 0;
  std::vector<double> speeds;
  for (const SimState& x : tr.states) {
    speeds.push_back(x.ego.speed());
    for (std::size_t a = 0; a < x.agents.size(); ++a)
      if (x.agent_valid[a] && agent_collides(x.ego, x.agents[a])) r.collision_free = 0;
    if (!footprint_drivable(OrientedBox::of(x.ego), s.drivable_region)) r.drivable_compliance = 0;
  }
  const double expert = tr.expert_route_s - tr.start_route_s;
  const double ego = tr.states.empty() ? 0.0 : tr.states.back().route_s - tr.start_route_s;
  r.progress_ratio = expert > 1e-6 ? std::clamp(ego / expert, 0.0, 1.0) : 1.0;
  r.arrived = r.progress_ratio >= arrival_fraction && r.collision_free && r.drivable_compliance && !tr.aborted;
  r.comfort_rms_jerk = rms_longitudinal_jerk(speeds);
  r.comfort_score = comfort_score(r.comfort_rms_jerk);
  r.composite = composite_score(r.collision_free, r.drivable_compliance, r.progress_ratio, r.comfort_score);
  return r;
}

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string metrics_csv_header() {
  return "scenario,mode,collision_free,drivable_compliance,progress_ratio,arrived,comfort_rms_jerk,comfort_score,"
         "composite,steps,aborted\n";
}

inline std::string metrics_csv_row(const MetricsReport& r) {
  return std::to_string(r.scenario_seed) + "," + std::string(to_string(r.mode)) + "," +
         std::to_string(r.collision_free) + "," + std::to_string(r.drivable_compliance) + "," +
         fmt6(r.progress_ratio) + "," + std::to_string(r.arrived) + "," + fmt6(r.comfort_rms_jerk) + "," +
         fmt6(r.comfort_score) + "," + fmt6(r.composite) + "," + std::to_string(r.steps) + "," +
         std::to_string(r.aborted) + "\n";
}

/// Suite means; the rates are fractions of scenarios.
struct MetricsSummary {
  std::size_t scenarios = 0;
  double collision_free = 0.0;
  double drivable_compliance = 0.0;
  double progress_ratio = 0.0;
  double arrived = 0.0;
  double comfort_rms_jerk = 0.0;
  double composite = 0.0;
};

inline MetricsSummary summarize(const std::vector<MetricsReport>& rs) {
  MetricsSummary m;
  m.scenarios = rs.size();
  if (rs.empty()) return m;
  for (const auto& r : rs) {
    m.collision_free += r.collision_free;
    m.drivable_compliance += r.drivable_compliance;
    m.progress_ratio += r.progress_ratio;
    m.arrived += r.arrived;
    m.comfort_rms_jerk += r.comfort_rms_jerk;
    m.composite += r.composite;
  }
  const double n = static_cast<double>(rs.size());
  m.collision_free /= n;
  m.drivable_compliance /= n;
  m.progress_ratio /= n;
  m.arrived /= n;
  m.comfort_rms_jerk /= n;
  m.composite /= n;
  return m;
}

inline std::string metrics_csv(const std::vector<MetricsReport>& rs) {
  std::string out = metrics_csv_header();
  for (const auto& r : rs) out += metrics_csv_row(r);
  return out;
}

inline nlohmann::json state_json(const AgentState& s) {
  return {s.position.x, s.position.y, s.heading, s.speed()};
}

/// One JSON object per simulated step; replanning steps carry the best mode.
inline void write_trace_jsonl(std::ostream& os, const RolloutTrace& tr) {
  std::size_t p = 0, e = 0;
  for (const SimState& x : tr.states) {
    nlohmann::json j;
    j["scenario"] = tr.scenario_seed;
    j["mode"] = to_string(tr.mode);
    j["step"] = x.step;
    j["ego"] = state_json(x.ego);
    j["route_s"] = x.route_s;
    nlohmann::json agents = nlohmann::json::array();
    for (std::size_t a = 0; a < x.agents.size(); ++a) {
      auto v = state_json(x.agents[a]);
      v.push_back(static_cast<int>(x.agent_valid[a]));
      v.push_back(to_string(x.controllers[a]));
      agents.push_back(std::move(v));
    }
    j["agents"] = std::move(agents);
    if (p < tr.plans.size() && tr.plans[p].step == x.step) {
      const PlanRecord& rec = tr.plans[p++];
      const std::size_t tf = rec.plan.trajectories.size() / (rec.plan.modes() * 3);
      nlohmann::json path = nlohmann::json::array();
      for (std::size_t t = 0; t < tf; ++t) {
        const Vec2 q = rollout_detail::waypoint(rec, t);
        path.push_back({q.x, q.y});
      }
      j["plan"] = {{"best_mode", rec.plan.best_mode()}, {"scores", rec.plan.scores.raw()}, {"path", path}};
    }
    nlohmann::json events = nlohmann::json::array();
    while (e < tr.events.size() && tr.events[e].step == x.step) {
      const SimEvent& ev = tr.events[e++];
      events.push_back({{"kind", to_string(ev.kind)}, {"agent", ev.agent}, {"detail", ev.detail}});
    }
    if (!events.empty()) j["events"] = std::move(events);
    os << j.dump() << '\n';
  }
  // Events past the last state (aborts).
  for (; e < tr.events.size(); ++e) {
    const SimEvent& ev = tr.events[e];
    os << nlohmann::json{{"scenario", tr.scenario_seed}, {"step", ev.step},
                         {"events", {{{"kind", to_string(ev.kind)}, {"agent", ev.agent}, {"detail", ev.detail}}}}}
              .dump()
       << '\n';
  }
}

}  // namespace carplan::sim
