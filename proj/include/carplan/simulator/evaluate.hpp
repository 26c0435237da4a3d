#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "carplan/model/planner.hpp"
#include "carplan/simulator/metrics.hpp"
#include "carplan/simulator/rollout.hpp"

namespace carplan::sim {

/// Open-loop distance errors at t = 0 over the model horizon. `ade`/`fde`
/// use the best-scored mode; `min_ade` the closest mode.
struct OpenLoopMetrics {
  std::uint64_t scenario_seed = 0;
  double ade = 0.0;
  double fde = 0.0;
  double min_ade = 0.0;
};

inline OpenLoopMetrics open_loop_metrics(const PlanOutput& plan, const Scenario& s) {
  const std::size_t m = plan.modes();
  const std::size_t tf = plan.trajectories.size() / (m * 3);
  if (static_cast<std::size_t>(s.future_steps) < tf)
    throw ScenarioError("horizon mismatch: model predicts " + std::to_string(tf) + " steps, scenario has " +
                        std::to_string(s.future_steps));
  const nn::Tensor y = av_future(s, tf);
  auto mode_errors = [&](std::size_t k, double& fde) {
    double sum = 0.0;
    for (std::size_t t = 0; t < tf; ++t) {
      const std::size_t b = (k * tf + t) * 3;
      const double e = std::hypot(plan.trajectories[b] - y[t * 3], plan.trajectories[b + 1] - y[t * 3 + 1]);
      sum += e;
      fde = e;
    }
    return sum / static_cast<double>(tf);
  };
  OpenLoopMetrics r;
  r.scenario_seed = s.seed;
  r.ade = mode_errors(plan.best_mode(), r.fde);
  r.min_ade = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m; ++k) {
    double f = 0.0;
    r.min_ade = std::min(r.min_ade, mode_errors(k, f));
  }
  return r;
}

inline OpenLoopMetrics open_loop_metrics(const Planner& p, const Scenario& s) {
  if (static_cast<std::size_t>(s.future_steps) < p.config().future_steps)
    throw ScenarioError("horizon mismatch: model predicts " + std::to_string(p.config().future_steps) +
                        " steps, scenario has " + std::to_string(s.future_steps));
  return open_loop_metrics(p.plan(s), s);
}

inline std::string open_loop_csv_header() { return "scenario,ade,fde,min_ade\n"; }
inline std::string open_loop_csv_row(const OpenLoopMetrics& m) {
  return std::to_string(m.scenario_seed) + "," + fmt6(m.ade) + "," + fmt6(m.fde) + "," + fmt6(m.min_ade) + "\n";
}

inline double mean_ade(const std::vector<OpenLoopMetrics>& ms) {
  double s = 0.0;
  for (const auto& m : ms) s += m.ade;
  return ms.empty() ? 0.0 : s / static_cast<double>(ms.size());
}

/// Builds the planner for one scenario (expert replay needs the scenario).
using PlannerFactory = std::function<PlanFn(const Scenario&)>;

struct SuiteResult {
  std::vector<MetricsReport> reports;
  ExpertUsage usage;
};

/// Closed-loop rollouts over a scenario set, in order. `on_trace` sees each
/// trace before it is discarded.
inline SuiteResult run_suite(const std::vector<Scenario>& corpus, const PlannerFactory& make, const RolloutConfig& cfg,
                             const std::function<void(const Scenario&, const RolloutTrace&)>& on_trace = {}) {
  SuiteResult out;
  for (const Scenario& s : corpus) {
    const RolloutTrace tr = rollout(make(s), s, cfg);
    for (const auto& rec : tr.plans) out.usage.add(rec.plan.routing);
    out.reports.push_back(score(tr, s, cfg.arrival_fraction));
    if (on_trace) on_trace(s, tr);
  }
  return out;
}

inline std::string summary_csv_header() {
  return "mode,scenarios,collision_free,drivable_compliance,progress_ratio,arrived,comfort_rms_jerk,composite\n";
}
inline std::string summary_csv_row(SimMode mode, const MetricsSummary& m) {
  return std::string(to_string(mode)) + "," + std::to_string(m.scenarios) + "," + fmt6(m.collision_free) + "," +
         fmt6(m.drivable_compliance) + "," + fmt6(m.progress_ratio) + "," + fmt6(m.arrived) + "," +
         fmt6(m.comfort_rms_jerk) + "," + fmt6(m.composite) + "\n";
}

}  // namespace carplan::sim
