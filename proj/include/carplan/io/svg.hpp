#pragma once

#include <algorithm>
#include <cstdio>
#include <istream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carplan/scene/types.hpp"
#include "carplan/simulator/collision.hpp"

namespace carplan::io {

/// Everything one top-down picture shows, in the scenario frame.
struct RenderInput {
  const Scenario* scenario = nullptr;
  AgentState ego;
  std::vector<AgentState> agents;
  std::vector<std::uint8_t> agent_valid;
  std::vector<std::uint8_t> colliding;
  bool ego_colliding = false;
  std::vector<Vec2> ground_truth;
  std::vector<std::vector<Vec2>> predicted;
  std::size_t best_mode = 0;
  std::vector<Vec2> executed;
  /// Per MoE layer, one value per expert.
  std::vector<std::vector<double>> expert_bars;
  std::string bar_label = "routing score";
};

struct RenderStats {
  std::size_t polylines = 0;
  std::size_t agents = 0;
  std::size_t colliding = 0;
  std::size_t trajectories = 0;
  std::size_t expert_layers = 0;
  std::size_t expert_bars = 0;
};

/// The scene at t = 0 with the logged AV future as ground truth.
inline RenderInput scene_at_start(const Scenario& s) {
  RenderInput in;
  in.scenario = &s;
  const auto now = static_cast<std::size_t>(s.current_index());
  in.ego = s.av_now();
  for (const auto& a : s.agents) {
    in.agents.push_back(a.states[now]);
    in.agent_valid.push_back(a.valid[now]);
  }
  in.colliding.assign(s.agents.size(), 0);
  for (std::size_t i = now + 1; i < s.av.states.size() && i <= now + static_cast<std::size_t>(s.future_steps); ++i)
    in.ground_truth.push_back(s.av.states[i].position);
  return in;
}

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct View {
  double x0 = 0.0, y1 = 0.0, scale = 5.0;
  double px(Vec2 p) const { return (p.x - x0) * scale; }
  double py(Vec2 p) const { return (y1 - p.y) * scale; }
  std::string pt(Vec2 p) const { return num(px(p)) + "," + num(py(p)); }
};

inline std::string polyline(const View& v, const std::vector<Vec2>& pts, const std::string& cls) {
  std::string s = "<polyline class=\"" + cls + "\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? " " : "") + v.pt(pts[i]);
  return s + "\"/>\n";
}

inline std::string box(const View& v, const AgentState& a, const std::string& cls) {
  const auto c = sim::OrientedBox::of(a).corners();
  std::string s = "<polygon class=\"" + cls + "\" points=\"";
  for (std::size_t i = 0; i < 4; ++i) s += (i ? " " : "") + v.pt(c[i]);
  return s + "\"/>\n";
}

}  // namespace svg_detail

/// Renders a top-down SVG: drivable area, map polylines, agent boxes, ground
/// truth, predicted and executed paths, and an optional per-layer expert panel.
inline std::string render_svg(const RenderInput& in, RenderStats* stats = nullptr) {
  using namespace svg_detail;
  RenderStats st;
  // View: everything dynamic plus a margin, at least 100 × 60 m.
  double xmin = in.ego.position.x, xmax = xmin, ymin = in.ego.position.y, ymax = ymin;
  auto grow = [&](Vec2 p) {
    xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
  };
  for (std::size_t i = 0; i < in.agents.size(); ++i)
    if (in.agent_valid[i]) grow(in.agents[i].position);
  for (auto p : in.ground_truth) grow(p);
  for (const auto& t : in.predicted)
    for (auto p : t) grow(p);
  for (auto p : in.executed) grow(p);
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  const double w = std::max(100.0, xmax - xmin + 30.0), h = std::max(60.0, ymax - ymin + 30.0);
  View v{cx - 0.5 * w, cy + 0.5 * h, 5.0};
  const double map_w = w * v.scale, map_h = h * v.scale;

  const double bar_w = 14.0, bar_h = 80.0, row_h = bar_h + 40.0;
  const double panel_h = in.expert_bars.empty() ? 0.0 : 30.0 + row_h * static_cast<double>(in.expert_bars.size());
  std::size_t widest = 0;
  for (const auto& l : in.expert_bars) widest = std::max(widest, l.size());
  const double total_w = std::max(map_w, 80.0 + bar_w * 1.5 * static_cast<double>(widest));

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(total_w) + "\" height=\"" + num(map_h + panel_h) +
         "\">\n";
  out += "<style>.drivable{fill:#eeeeee;stroke:none}.lane_center{fill:none;stroke:#9e9e9e;stroke-dasharray:6 4}"
         ".road_boundary{fill:none;stroke:#212121;stroke-width:2}.crosswalk{fill:none;stroke:#1e88e5;stroke-width:3}"
         ".agent{fill:#90a4ae;stroke:#37474f}.ego{fill:#ffb300;stroke:#e65100}.collision{fill:#e53935;stroke:#b71c1c}"
         ".gt{fill:none;stroke:#2e7d32;stroke-width:2}.pred{fill:none;stroke:#1565c0;stroke-width:1;opacity:.6}"
         ".pred.best{stroke-width:3;opacity:1}.executed{fill:none;stroke:#6a1b9a;stroke-width:2}"
         ".expert-bar{fill:#5c6bc0}text{font:11px sans-serif}</style>\n";
  out += "<g class=\"map\">\n";
  if (in.scenario) {
    for (const auto& poly : in.scenario->drivable_region) {
      std::string s = "<polygon class=\"drivable\" points=\"";
      for (std::size_t i = 0; i < poly.vertices.size(); ++i) s += (i ? " " : "") + v.pt(poly.vertices[i]);
      out += s + "\"/>\n";
    }
    for (const auto& m : in.scenario->map) {
      out += polyline(v, m.points, std::string(to_string(m.kind)));
      st.polylines++;
    }
  }
  out += "</g>\n<g class=\"agents\">\n";
  for (std::size_t i = 0; i < in.agents.size(); ++i) {
    if (!in.agent_valid[i]) continue;
    const bool hit = i < in.colliding.size() && in.colliding[i];
    out += box(v, in.agents[i], hit ? "agent collision" : "agent");
    st.agents++;
    st.colliding += hit ? 1 : 0;
  }
  out += box(v, in.ego, in.ego_colliding ? "ego collision" : "ego");
  out += "</g>\n<g class=\"trajectories\">\n";
  if (!in.ground_truth.empty()) out += polyline(v, in.ground_truth, "gt"), st.trajectories++;
  for (std::size_t m = 0; m < in.predicted.size(); ++m) {
    out += polyline(v, in.predicted[m], m == in.best_mode ? "pred best" : "pred");
    st.trajectories++;
  }
  if (!in.executed.empty()) out += polyline(v, in.executed, "executed"), st.trajectories++;
  out += "</g>\n";

  if (!in.expert_bars.empty()) {
    out += "<g class=\"experts\" transform=\"translate(0," + num(map_h) + ")\">\n";
    out += "<text x=\"10\" y=\"18\">" + in.bar_label + " per expert</text>\n";
    for (std::size_t l = 0; l < in.expert_bars.size(); ++l) {
      const auto& vals = in.expert_bars[l];
      const double top = *std::max_element(vals.begin(), vals.end());
      const double y0 = 30.0 + row_h * static_cast<double>(l);
      out += "<g class=\"expert-layer\" data-layer=\"" + std::to_string(l + 1) + "\">\n";
      out += "<text x=\"10\" y=\"" + num(y0 + bar_h) + "\">L" + std::to_string(l + 1) + "</text>\n";
      for (std::size_t e = 0; e < vals.size(); ++e) {
        const double hgt = top > 0.0 ? bar_h * vals[e] / top : 0.0;
        out += "<rect class=\"expert-bar\" data-expert=\"" + std::to_string(e) + "\" data-value=\"" + num(vals[e]) +
               "\" x=\"" + num(50.0 + bar_w * 1.5 * static_cast<double>(e)) + "\" y=\"" + num(y0 + bar_h - hgt) +
               "\" width=\"" + num(bar_w) + "\" height=\"" + num(hgt) + "\"/>\n";
        st.expert_bars++;
      }
      out += "</g>\n";
      st.expert_layers++;
    }
    out += "</g>\n";
  }
  out += "</svg>\n";
  if (stats) *stats = st;
  return out;
}

inline std::string render_stats_csv(const RenderStats& s) {
  return "polylines,agents,colliding,trajectories,expert_layers,expert_bars\n" + std::to_string(s.polylines) + "," +
         std::to_string(s.agents) + "," + std::to_string(s.colliding) + "," + std::to_string(s.trajectories) + "," +
         std::to_string(s.expert_layers) + "," + std::to_string(s.expert_bars) + "\n";
}

/// One step of a rollout trace file.
struct TraceStep {
  int step = 0;
  AgentState ego;
  std::vector<AgentState> agents;
  std::vector<std::uint8_t> valid;
  std::vector<int> colliding_agents;
};

inline AgentState state_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() < 4) throw ScenarioError("trace state must be [x, y, heading, speed, ...]");
  AgentState s;
  s.position = {j[0].get<double>(), j[1].get<double>()};
  s.heading = j[2].get<double>();
  const double v = j[3].get<double>();
  s.velocity = Vec2{std::cos(s.heading), std::sin(s.heading)} * v;
  return s;
}

/// Reads a trace written by the simulator. Throws ScenarioError on malformed input.
inline std::vector<TraceStep> read_trace(std::istream& is) {
  std::vector<TraceStep> steps;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.contains("ego")) {
        // Event-only line (aborted rollouts).
        continue;
      }
      TraceStep t;
      t.step = j.at("step").get<int>();
      t.ego = state_from_json(j.at("ego"));
      for (const auto& a : j.at("agents")) {
        t.agents.push_back(state_from_json(a));
        t.valid.push_back(a.size() > 4 ? static_cast<std::uint8_t>(a[4].get<int>()) : 1);
      }
      if (j.contains("events"))
        for (const auto& e : j.at("events"))
          if (e.at("kind").get<std::string>() == "collision") t.colliding_agents.push_back(e.at("agent").get<int>());
      steps.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ScenarioError("malformed trace line " + std::to_string(n) + ": " + e.what());
    }
  }
  if (steps.empty()) throw ScenarioError("trace has no steps");
  return steps;
}

/// Scene at the first collision of a trace (or its last step), with the
/// executed ego path. Agent sizes come from the scenario.
inline RenderInput scene_from_trace(const Scenario& s, const std::vector<TraceStep>& trace) {
  RenderInput in = scene_at_start(s);
  std::size_t pick = trace.size() - 1;
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (!trace[i].colliding_agents.empty()) {
      pick = i;
      break;
    }
  const TraceStep& t = trace[pick];
  if (t.agents.size() != s.agents.size()) throw ScenarioError("trace agent count does not match scenario");
  in.ego.position = t.ego.position, in.ego.heading = t.ego.heading, in.ego.velocity = t.ego.velocity;
  for (std::size_t a = 0; a < t.agents.size(); ++a) {
    in.agents[a].position = t.agents[a].position;
    in.agents[a].heading = t.agents[a].heading;
    in.agents[a].velocity = t.agents[a].velocity;
    in.agent_valid[a] = t.valid[a];
  }
  for (int a : t.colliding_agents) {
    if (a < 0 || static_cast<std::size_t>(a) >= in.colliding.size()) throw ScenarioError("trace collision agent out of range");
    in.colliding[static_cast<std::size_t>(a)] = 1;
    in.ego_colliding = true;
  }
  for (const auto& x : trace) in.executed.push_back(x.ego.position);
  return in;
}

}  // namespace carplan::io
