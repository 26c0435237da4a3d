// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// writes the numbers behind each verdict to <work>/acceptance_report.csv.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../support/model_oracles.hpp"
#include "../support/oracles.hpp"
#include "carplan/numerics/grad_check.hpp"
#include "carplan/scene/displacement.hpp"
#include "carplan/scene/generator.hpp"
#include "carplan/simulator/evaluate.hpp"
#include "carplan/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace carplan;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double cpu_seconds(std::clock_t since) { return static_cast<double>(std::clock() - since) / CLOCKS_PER_SEC; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Scenario> corpus(std::uint64_t first_seed, int n, const GeneratorConfig& g = {}) {
  std::vector<Scenario> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_scenario(g, first_seed + static_cast<std::uint64_t>(i)));
  return out;
}

std::vector<TrainExample> examples(const std::vector<Scenario>& sc, const ModelConfig& mc) {
  std::vector<TrainExample> out;
  for (const auto& s : sc) out.push_back(make_example(s, mc));
  return out;
}

double best_mode_ade(const Planner& p, const std::vector<Scenario>& sc) {
  std::vector<sim::OpenLoopMetrics> ms;
  for (const auto& s : sc) ms.push_back(sim::open_loop_metrics(p, s));
  return sim::mean_ade(ms);
}

// 1. Finite differences against the tape on the tiny model's total loss.
Verdict gradient_check() {
  GeneratorConfig g;
  g.min_agents = g.max_agents = 2;
  g.max_polylines = 2;
  g.topologies = {Topology::straight};
  const Scenario s = generate_scenario(g, 3);
  const ModelConfig mc = ModelConfig::tiny();
  Planner p(mc);
  const TrainExample ex = make_example(s, mc);
  const TrainConfig tc;
  const std::clock_t t0 = std::clock();
  const nn::GradCheckReport rep = nn::grad_check_report(
      [&](nn::Tape& t) { return total_loss(t, p, {&ex}, tc).total; }, p.parameters().all(), 1e-5, {}, 1e-8);
  const double secs = cpu_seconds(t0);
  std::string worst;
  double worst_err = -1.0;
  for (const auto& b : rep.blocks)
    if (b.max_rel_error > worst_err) worst_err = b.max_rel_error, worst = b.name + " (analytic " +
                                                                 fmt("%.3e", b.worst_analytic) + ", numeric " +
                                                                 fmt("%.3e", b.worst_numeric) + ")";
  return {rep.max_rel_error <= 1e-4 && secs <= 60.0,
          "max rel error " + fmt("%.3e", rep.max_rel_error) + " (<= 1e-4) at " + worst + "; " +
              std::to_string(p.parameters().element_count()) + " parameters in " + fmt("%.1f", secs) + " s CPU"};
}

// 2. Sparse expert mixing against the dense masked sum; top-K against sorting.
Verdict moe_oracles() {
  double gap = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const std::size_t n = 2 + seed % 15, k = 1 + (seed / 15) % n;
    oracle::MixFixture f(10000 + seed, 1 + seed % 6, n, seed % 3);
    gap = std::max(gap, oracle::largest_gap(f.mix(make_decision(f.probs, k)), f.dense(k)));
  }
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> len(1, 32), coarse(0, 4);
  std::normal_distribution<double> nd(0.0, 1.0);
  int mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    const bool tied = trial % 4 == 0;
    for (double& x : v) x = tied ? coarse(rng) * 0.25 : nd(rng);
    std::uniform_int_distribution<std::size_t> kd(0, v.size());
    const std::size_t k = kd(rng);
    mismatches += top_k_indices(v, k) != oracle::sort_oracle(v, k);
  }
  return {gap <= 1e-12 && mismatches == 0, "max |sparse - dense| " + fmt("%.3e", gap) +
                                                " over 1000 parameterizations; top-K mismatches " +
                                                std::to_string(mismatches) + " of 10000"};
}

// 3. Evaluating the displacement head must not touch the plan.
Verdict dpe_invariance() {
  int differing = 0;
  GeneratorConfig g;
  for (std::uint64_t i = 0; i < 100; ++i) {
    ModelConfig mc = ModelConfig::desk();
    mc.seed = i;
    const Planner p(mc);
    const SceneInputs in = p.inputs(generate_scenario(g, 20000 + i));
    const PlanOutput off = p.plan(in, false), on = p.plan(in, true);
    bool same = off.trajectories == on.trajectories && off.scores == on.scores &&
                off.routing.size() == on.routing.size();
    for (std::size_t l = 0; same && l < off.routing.size(); ++l)
      same = off.routing[l].scores == on.routing[l].scores && off.routing[l].selected == on.routing[l].selected;
    differing += !same;
  }
  return {differing == 0, std::to_string(differing) + " of 100 scenes differ with the displacement head evaluated"};
}

// 4. Displacement targets against the brute-force definition.
Verdict displacement_oracle() {
  int bad = 0;
  std::size_t values = 0;
  GeneratorConfig g;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Scenario s = generate_scenario(g, 30000 + seed);
    const auto d = compute_displacement_targets(s);
    const std::size_t n = s.agents.size() + s.map.size(), tf = static_cast<std::size_t>(s.future_steps);
    bool ok = d.values.shape() == nn::Shape{n, tf, 2};
    for (std::size_t e = 0; ok && e < n; ++e)
      for (std::size_t t = 0; ok && t < tf; ++t) {
        const Vec2 o = oracle::displacement_target(s, e, t);
        ok = d.values[(e * tf + t) * 2] == o.x && d.values[(e * tf + t) * 2 + 1] == o.y;
      }
    bad += !ok;
    values += d.values.size();
  }
  return {bad == 0, std::to_string(bad) + " of 1000 scenarios mismatch (" + std::to_string(values) + " values compared)"};
}

// 5. The full model memorizes a small training set.
Verdict overfit() {
  const auto sc = corpus(1000, 8);
  const ModelConfig mc = ModelConfig::desk();
  Planner p(mc);
  const auto data = examples(sc, mc);
  TrainConfig tc;
  tc.steps = 500;
  const std::clock_t t0 = std::clock();
  Trainer(p, tc).run(data);
  const double secs = cpu_seconds(t0);
  const double ade = best_mode_ade(p, sc);
  return {ade <= 0.2 && secs <= 600.0,
          "training-set ADE " + fmt("%.4f", ade) + " m (<= 0.2) after 500 steps in " + fmt("%.1f", secs) + " s CPU"};
}

// 6. The balance loss evens out expert usage; its value is bounded below by 1.
Verdict balance_effect(std::size_t steps, std::ostream& report) {
  const auto sc = corpus(50000, 200);
  const ModelConfig mc = ModelConfig::desk();
  const auto data = examples(sc, mc);
  double cv[2] = {0.0, 0.0}, min_bal = 1e300;
  for (int with = 0; with < 2; ++with) {
    Planner p(mc);
    TrainConfig tc;
    tc.steps = steps;
    tc.balance = with == 1;
    Trainer(p, tc).run(data, [&](const StepRecord& r) {
      if (r.loss.has_bal) min_bal = std::min(min_bal, r.loss.l_bal);
    });
    ExpertUsage usage;
    for (const auto& ex : data) usage.add(p.plan(ex.inputs).routing);
    cv[with] = usage.coefficient_of_variation();
    report << "6,usage_cv_" << (with ? "with" : "without") << "_balance," << fmt("%.6f", cv[with]) << "\n";
  }

  // Random routings through the loss itself, then forced-uniform routing.
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 2.0);
  double min_random = 1e300;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + trial % 15, k = 1 + trial % n, rows = 1 + trial % 9, layers = 1 + trial % 3;
    nn::Tape t(false);
    std::vector<std::vector<nn::Var>> probs(layers);
    std::vector<RoutingDecision> ds;
    ds.reserve(layers);
    for (std::size_t l = 0; l < layers; ++l) {
      nn::Tensor p({rows, n});
      for (std::size_t r = 0; r < rows; ++r) {
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) z += p.at(r, i) = std::exp(nd(rng));
        for (std::size_t i = 0; i < n; ++i) p.at(r, i) /= z;
      }
      probs[l].push_back(t.constant(p));
      ds.push_back(make_decision(p, k));
    }
    std::vector<std::vector<const RoutingDecision*>> dec(layers);
    for (std::size_t l = 0; l < layers; ++l) dec[l].push_back(&ds[l]);
    min_random = std::min(min_random, balance_loss(t, probs, dec).value().item());
  }
  double uniform_gap = 0.0;
  for (std::size_t n : {2u, 4u, 8u, 16u}) {
    const std::size_t k = n / 2;
    nn::Tape t(false);
    const nn::Tensor p({n, n}, 1.0 / static_cast<double>(n));
    RoutingDecision d = make_decision(p, k);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < k; ++j) d.selected[r][j] = (r + j) % n;
    uniform_gap = std::max(uniform_gap, std::abs(balance_loss(t, {{t.constant(p)}, {t.constant(p)}}, {{&d}, {&d}}).value().item() - 1.0));
  }
  const bool pass = cv[1] < cv[0] && min_bal >= 1.0 && min_random >= 1.0 - 1e-12 && uniform_gap <= 1e-9;
  return {pass, "usage CV " + fmt("%.4f", cv[1]) + " with balance vs " + fmt("%.4f", cv[0]) + " without (" +
                    std::to_string(steps) + " steps, 200 scenarios); min L_bal in training " + fmt("%.6f", min_bal) +
                    ", on 2000 random routings " + fmt("%.6f", min_random) + "; |L_bal - 1| under uniform routing " +
                    fmt("%.1e", uniform_gap)};
}

// 7. Ablation: each component helps, and both together help most.
Verdict ablation(std::size_t steps, const fs::path& work, std::ostream& report) {
  const auto train = corpus(100000, 200), held_out = corpus(200000, 100);
  struct Variant {
    const char* name;
    DpeMode dpe;
    bool moe;
  };
  const Variant variants[] = {{"baseline", DpeMode::none, false},
                              {"dpe_only", DpeMode::agent_map, false},
                              {"moe_only", DpeMode::none, true},
                              {"full", DpeMode::agent_map, true}};
  std::map<std::string, double> composite;
  std::string csv = "variant,dpe,experts,steps,train_seconds,final_l_plan,open_loop_ade,composite,collision_free,"
                    "drivable_compliance,progress_ratio,arrived\n";
  for (const auto& v : variants) {
    ModelConfig mc = ModelConfig::desk();
    mc.dpe = v.dpe;
    if (!v.moe) mc.experts = 0;
    mc.validate();
    Planner p(mc);
    TrainConfig tc;
    tc.steps = steps;
    const auto data = examples(train, mc);
    double last_plan = 0.0;
    const std::clock_t t0 = std::clock();
    Trainer(p, tc).run(data, [&](const StepRecord& r) { last_plan = r.loss.l_plan; });
    const double secs = cpu_seconds(t0);
    sim::RolloutConfig rc;
    rc.mode = sim::SimMode::non_reactive;
    const auto suite = sim::run_suite(held_out, [&](const Scenario&) { return sim::model_planner(p); }, rc);
    const auto sum = sim::summarize(suite.reports);
    composite[v.name] = sum.composite;
    csv += std::string(v.name) + "," + std::string(to_string(mc.dpe)) + "," + std::to_string(mc.experts) + "," +
           std::to_string(steps) + "," + fmt("%.1f", secs) + "," + sim::fmt6(last_plan) + "," +
           sim::fmt6(best_mode_ade(p, held_out)) + "," + sim::fmt6(sum.composite) + "," + sim::fmt6(sum.collision_free) +
           "," + sim::fmt6(sum.drivable_compliance) + "," + sim::fmt6(sum.progress_ratio) + "," + sim::fmt6(sum.arrived) +
           "\n";
    report << "7,composite_" << v.name << "," << fmt("%.6f", sum.composite) << "\n";
  }
  std::ofstream(work / "ablation_report.csv") << csv;
  const double band = 1.0, full = composite["full"], base = composite["baseline"];
  const bool pass = full >= composite["dpe_only"] - band && full >= composite["moe_only"] - band &&
                    composite["dpe_only"] >= base - band && composite["moe_only"] >= base - band;
  return {pass, "composite full " + fmt("%.2f", full) + ", dpe_only " + fmt("%.2f", composite["dpe_only"]) +
                    ", moe_only " + fmt("%.2f", composite["moe_only"]) + ", baseline " + fmt("%.2f", base) +
                    " on 100 held-out NR scenarios (1-point band; soft target); report " +
                    (work / "ablation_report.csv").string()};
}

// 8. Log replay is safe, SAT agrees with sampling, IDM platoons never touch.
Verdict simulator_soundness() {
  GeneratorConfig g;
  int unsafe = 0;
  const int scenes = 500;
  for (int i = 0; i < scenes; ++i) {
    const Scenario s = generate_scenario(g, 40000 + static_cast<std::uint64_t>(i));
    sim::RolloutConfig rc;
    rc.mode = sim::SimMode::non_reactive;
    const auto tr = sim::rollout(sim::expert_replay_planner(s, static_cast<std::size_t>(s.future_steps)), s, rc);
    const auto m = sim::score(tr, s, rc.arrival_fraction);
    unsafe += !(m.collision_free && m.drivable_compliance);
  }
  const oracle::RectPairStats sat = oracle::compare_sat_with_sampling(10000, 4242);
  double worst_gap = 0.0;
  const int platoon_bad = oracle::platoon_violations(1000, 99, &worst_gap);
  return {unsafe == 0 && sat.disagreements == 0 && platoon_bad == 0,
          "expert replay unsafe on " + std::to_string(unsafe) + " of " + std::to_string(scenes) +
              " NR scenarios; SAT vs sampling disagreements " + std::to_string(sat.disagreements) + " of " +
              std::to_string(sat.counted) + " counted pairs (" + std::to_string(sat.pairs - sat.counted) +
              " inside the 1e-3 band); IDM platoon violations " + std::to_string(platoon_bad) +
              " of 1000, min gap " + fmt("%.3f", worst_gap) + " m"};
}

// 9. Every subcommand run twice gives byte-identical CSVs.
int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Verdict determinism(const std::string& cli, const fs::path& work) {
  std::vector<std::string> problems;
  int files = 0;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path d = work / ("run" + std::to_string(rep));
    fs::remove_all(d);
    auto out = [&](const char* sub) { return " --out \"" + (d / sub).string() + "\""; };
    const std::string c = (d / "gen-data" / "corpus.jsonl").string();
    const std::string ck = (d / "train" / "checkpoint.bin").string();
    const std::vector<std::pair<std::string, std::set<int>>> runs = {
        {"gen-data --count 6 --seed 9" + out("gen-data"), {0}},
        {"train --corpus \"" + c + "\" --preset tiny --steps 6 --batch 3" + out("train"), {0}},
        {"eval --corpus \"" + c + "\" --checkpoint \"" + ck + "\" --mode both --limit 4" + out("eval"), {0}},
        {"eval --corpus \"" + c + "\" --planner expert --mode both --limit 4" + out("eval-expert"), {0}},
        {"render --corpus \"" + c + "\" --index 1 --checkpoint \"" + ck + "\"" + out("render"), {0}},
        {"grad-check" + out("grad-check"), {0, 3}}};
    for (const auto& [args, ok] : runs) {
      const int rc = run_cli(cli, args);
      if (!ok.count(rc)) problems.push_back("exit " + std::to_string(rc) + " from: " + args);
    }
  }
  for (const auto& e : fs::recursive_directory_iterator(work / "run0")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const fs::path other = work / "run1" / fs::relative(e.path(), work / "run0");
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) problems.push_back("differs: " + fs::relative(e.path(), work / "run0").string());
  }
  std::string detail = std::to_string(files) + " metrics CSVs from gen-data, train, eval, render, grad-check compared";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() && files >= 9, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string cli, work = "acceptance_work";
  std::vector<int> only;
  std::size_t balance_steps = 300, ablation_steps = 500;
  app.add_option("--cli", cli, "path to the carplan binary")->required();
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--balance-steps", balance_steps, "training steps per balance run");
  app.add_option("--ablation-steps", ablation_steps, "training steps per ablation variant");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  std::ostringstream extra;
  const std::vector<std::tuple<int, const char*, bool, std::function<Verdict()>>> criteria = {
      {1, "gradient check on the tiny model", true, gradient_check},
      {2, "sparse/dense expert mixing and top-K oracles", true, moe_oracles},
      {3, "displacement head leaves plans bit-identical", true, dpe_invariance},
      {4, "displacement targets match the oracle", true, displacement_oracle},
      {5, "overfit 8 scenarios", true, overfit},
      {6, "balance loss lowers expert-usage CV", true, [&] { return balance_effect(balance_steps, extra); }},
      {7, "ablation ordering (soft)", false, [&] { return ablation(ablation_steps, work, extra); }},
      {8, "simulator soundness", true, simulator_soundness},
      {9, "byte-identical CSVs across runs", true, [&] { return determinism(cli, work); }}};

  bool hard_ok = true;
  std::string csv = "criterion,name,verdict,wall_seconds,detail\n";
  for (const auto& [id, name, hard, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d: %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), secs);
    std::fflush(stdout);
    if (hard && !v.pass) hard_ok = false;
    std::string quoted = v.detail;
    for (std::size_t i = 0; (i = quoted.find('"', i)) != std::string::npos; i += 2) quoted.insert(i, "\"");
    csv += std::to_string(id) + "," + name + "," + (v.pass ? "PASS" : "FAIL") + "," + fmt("%.1f", secs) + ",\"" +
           quoted + "\"\n";
  }
  std::ofstream(fs::path(work) / "acceptance_report.csv") << csv;
  if (!extra.str().empty()) std::ofstream(fs::path(work) / "acceptance_values.csv") << "criterion,key,value\n" << extra.str();
  return hard_ok ? 0 : 1;
}
