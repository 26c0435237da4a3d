// carplan: data generation, training, evaluation, rendering and gradient checks.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "carplan/io/run_config.hpp"
#include "carplan/io/svg.hpp"
#include "carplan/numerics/grad_check.hpp"
#include "carplan/scene/generator.hpp"
#include "carplan/scene/serialize.hpp"
#include "carplan/simulator/evaluate.hpp"
#include "carplan/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace carplan;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kVerification = 3 };

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string output_root() {
  const char* e = std::getenv("CARPLAN_OUTPUT_ROOT");
  return e && *e ? e : "runs";
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << s;
}

std::vector<Scenario> read_corpus(const std::string& path) {
  if (path.empty()) throw ConfigError("corpus is required");
  if (!fs::exists(path)) throw DataError("corpus not found: " + path);
  return load_corpus(path);
}

/// Subcommand scaffolding: declared keys, a config file, `--set k=v`, and
/// named flags, applied in that order.
struct Command {
  CLI::App* app = nullptr;
  RunConfig rc;
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> storage;
  std::vector<std::pair<std::string, CLI::Option*>> flags;

  Command(CLI::App& parent, const std::string& name, const std::string& help) {
    app = parent.add_subcommand(name, help);
    app->add_option("--config", config_file, "key=value config file");
    app->add_option("--set", sets, "override one config key (key=value), repeatable");
    declare("out", "");
    flag("--out", "out", "output directory (default: $CARPLAN_OUTPUT_ROOT/" + name + ")");
  }

  void declare(const std::string& key, const std::string& value) { rc.declare(key, value); }
  void flag(const std::string& name, const std::string& key, const std::string& help) {
    flags.emplace_back(key, app->add_option(name, storage[key], help));
  }

  void resolve() {
    if (!config_file.empty()) rc.merge_file(config_file);
    for (const auto& s : sets) rc.set_assignment(s);
    for (const auto& [key, opt] : flags)
      if (opt->count() > 0) rc.set(key, storage[key]);
    if (rc.str("out").empty()) rc.set("out", (fs::path(output_root()) / app->get_name()).string());
  }

  fs::path out() const { return rc.str("out"); }

  /// Creates the output directory and records the resolved config in it.
  void prepare_output() const {
    std::error_code ec;
    fs::create_directories(out(), ec);
    if (ec) throw DataError("cannot create output directory " + out().string() + ": " + ec.message());
    write_text(out() / "resolved_config.txt", rc.serialize());
  }
};

std::vector<Scenario> select(std::vector<Scenario> corpus, std::size_t offset, std::size_t limit) {
  if (offset >= corpus.size()) return {};
  corpus.erase(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(offset));
  if (limit > 0 && corpus.size() > limit) corpus.resize(limit);
  return corpus;
}

// ---- gen-data ----

void setup_gen_data(Command& c) {
  c.declare("count", "100");
  c.declare("seed", "1");
  c.declare("topologies", "straight,curved,intersection,lane_change");
  c.declare("min_agents", "2");
  c.declare("max_agents", "8");
  c.declare("max_polylines", "32");
  c.declare("force_lead", "0");
  c.declare("future_steps", "40");
  c.flag("--count", "count", "number of scenarios");
  c.flag("--seed", "seed", "corpus seed");
  c.flag("--topologies", "topologies", "comma-separated topology mix");
}

int run_gen_data(Command& c) {
  GeneratorConfig g;
  g.topologies.clear();
  std::stringstream ss(c.rc.str("topologies"));
  for (std::string t; std::getline(ss, t, ',');) {
    auto topo = parse_topology(t);
    if (!topo) throw ConfigError("unknown topology: " + t);
    g.topologies.push_back(*topo);
  }
  g.min_agents = static_cast<int>(c.rc.integer("min_agents"));
  g.max_agents = static_cast<int>(c.rc.integer("max_agents"));
  g.max_polylines = static_cast<int>(c.rc.count("max_polylines"));
  g.force_lead = c.rc.flag("force_lead");
  g.future_steps = static_cast<int>(c.rc.count("future_steps"));
  const std::size_t n = c.rc.count("count");
  const std::uint64_t seed = c.rc.seed("seed");
  c.prepare_output();

  std::vector<Scenario> corpus;
  std::string manifest = "index,seed,topology,agents,polylines,centerlines\n";
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = seed * 1000003ULL + i;
    corpus.push_back(generate_scenario(g, s));
    const Scenario& sc = corpus.back();
    manifest += std::to_string(i) + "," + std::to_string(s) + "," + std::string(to_string(sc.topology)) + "," +
                std::to_string(sc.agents.size()) + "," + std::to_string(sc.map.size()) + "," +
                std::to_string(sc.centerlines.size()) + "\n";
  }
  save_corpus((c.out() / "corpus.jsonl").string(), corpus);
  write_text(c.out() / "manifest.csv", manifest);
  std::cout << "wrote " << n << " scenarios to " << (c.out() / "corpus.jsonl").string() << "\n";
  return kOk;
}

// ---- train ----

void setup_train(Command& c) {
  c.declare("corpus", "");
  declare_model_keys(c.rc);
  c.declare("steps", "500");
  c.declare("lr", "0.001");
  c.declare("batch_size", "8");
  c.declare("seed", "0");
  c.declare("balance", "1");
  c.declare("lambda_disp", "1");
  c.declare("lambda_bal", "1");
  c.declare("cosine", "1");
  c.declare("warmup", "50");
  c.declare("clip_norm", "1");
  c.declare("beta2", "0.999");
  c.declare("limit", "0");
  c.flag("--corpus", "corpus", "training corpus (JSON Lines)");
  c.flag("--preset", "preset", "model preset: desk or tiny");
  c.flag("--dpe", "dpe", "displacement targets: off, agent, map, agent_map");
  c.flag("--experts", "experts", "routed experts (0: plain decoder)");
  c.flag("--topk", "top_k", "experts selected per query");
  c.flag("--shared", "shared_experts", "shared experts");
  c.flag("--steps", "steps", "optimizer steps");
  c.flag("--lr", "lr", "learning rate");
  c.flag("--batch", "batch_size", "batch size");
  c.flag("--seed", "seed", "training seed");
  c.flag("--balance", "balance", "enable the balance loss (0/1)");
  c.flag("--limit", "limit", "use only the first N scenarios (0: all)");
}

int run_train(Command& c) {
  const ModelConfig mc = resolve_model(c.rc);
  TrainConfig tc;
  tc.steps = c.rc.count("steps");
  tc.lr = c.rc.real("lr");
  tc.batch_size = c.rc.count("batch_size");
  tc.seed = c.rc.seed("seed");
  tc.balance = c.rc.flag("balance");
  tc.lambda_disp = c.rc.real("lambda_disp");
  tc.lambda_bal = c.rc.real("lambda_bal");
  tc.cosine = c.rc.flag("cosine");
  tc.warmup = c.rc.count("warmup");
  tc.clip_norm = c.rc.real("clip_norm");
  tc.beta2 = c.rc.real("beta2");
  if (tc.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto corpus = select(read_corpus(c.rc.str("corpus")), 0, c.rc.count("limit"));
  c.prepare_output();

  std::vector<TrainExample> data;
  for (const auto& s : corpus) data.push_back(make_example(s, mc));
  Planner model(mc);
  Trainer trainer(model, tc);
  std::string log = csv_header();
  ExpertUsage usage;
  const auto t0 = std::chrono::steady_clock::now();
  trainer.run(data, [&](const StepRecord& r) {
    log += csv_row(r);
    usage.merge(r.loss.usage);
    if (r.step % 50 == 0 || r.step == tc.steps)
      std::printf("step %zu  l_total %.4f  l_plan %.4f  l_disp %.4f  l_bal %.4f\n", r.step, r.loss.l_total,
                  r.loss.l_plan, r.loss.l_disp, r.loss.l_bal);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  model.save((c.out() / "checkpoint.bin").string());
  write_text(c.out() / "train_log.csv", log);
  write_text(c.out() / "expert_usage.json", usage.to_json().dump(2) + "\n");
  std::printf("trained %zu steps on %zu scenarios in %.1f s; checkpoint %s\n", tc.steps, data.size(), secs,
              (c.out() / "checkpoint.bin").string().c_str());
  return kOk;
}

// ---- eval ----

void setup_eval(Command& c) {
  c.declare("corpus", "");
  c.declare("checkpoint", "");
  c.declare("planner", "model");
  c.declare("mode", "NR");
  c.declare("open_loop", "1");
  c.declare("closed_loop", "1");
  c.declare("horizon_s", "8");
  c.declare("offset", "0");
  c.declare("limit", "0");
  c.declare("traces", "0");
  c.flag("--corpus", "corpus", "evaluation corpus (JSON Lines)");
  c.flag("--checkpoint", "checkpoint", "model checkpoint");
  c.flag("--planner", "planner", "model or expert (log replay)");
  c.flag("--mode", "mode", "NR, R or both");
  c.flag("--limit", "limit", "evaluate only N scenarios (0: all)");
  c.flag("--offset", "offset", "skip the first N scenarios");
}

int run_eval(Command& c) {
  const std::string planner_kind = c.rc.str("planner");
  if (planner_kind != "model" && planner_kind != "expert") throw ConfigError("planner must be model or expert");
  std::vector<sim::SimMode> modes;
  const std::string mode = c.rc.str("mode");
  if (mode == "both") modes = {sim::SimMode::non_reactive, sim::SimMode::reactive};
  else if (auto m = sim::parse_sim_mode(mode)) modes = {*m};
  else throw ConfigError("mode must be NR, R or both");
  const double horizon = c.rc.real("horizon_s");
  if (!(horizon > 0.0)) throw ConfigError("horizon_s must be positive");
  const bool want_open = c.rc.flag("open_loop"), want_closed = c.rc.flag("closed_loop"), traces = c.rc.flag("traces");
  const auto corpus = select(read_corpus(c.rc.str("corpus")), c.rc.count("offset"), c.rc.count("limit"));

  std::optional<Planner> model;
  if (planner_kind == "model") {
    const std::string ck = c.rc.str("checkpoint");
    if (ck.empty()) throw ConfigError("checkpoint is required for planner=model");
    if (!fs::exists(ck)) throw DataError("checkpoint not found: " + ck);
    model.emplace(Planner::load(ck));
    for (const auto& s : corpus)
      if (static_cast<std::size_t>(s.future_steps) < model->config().future_steps)
        throw DataError("horizon mismatch: checkpoint predicts " + std::to_string(model->config().future_steps) +
                        " steps but scenario " + std::to_string(s.seed) + " has " + std::to_string(s.future_steps));
  }
  c.prepare_output();

  if (want_open) {
    std::string csv = sim::open_loop_csv_header();
    std::vector<sim::OpenLoopMetrics> ms;
    for (const auto& s : corpus) {
      if (model) ms.push_back(sim::open_loop_metrics(*model, s));
      else {
        const auto tf = static_cast<std::size_t>(s.future_steps);
        ms.push_back(sim::open_loop_metrics(sim::expert_replay_planner(s, tf)(s, Frame{}, 0), s));
      }
      csv += sim::open_loop_csv_row(ms.back());
    }
    write_text(c.out() / "open_loop.csv", csv);
    std::printf("open-loop ADE %.4f m over %zu scenarios\n", sim::mean_ade(ms), ms.size());
  }

  if (want_closed) {
    const sim::PlannerFactory make = [&](const Scenario& s) -> sim::PlanFn {
      if (model) return sim::model_planner(*model);
      return sim::expert_replay_planner(s, static_cast<std::size_t>(s.future_steps));
    };
    std::string rows = sim::metrics_csv_header(), summary = sim::summary_csv_header();
    ExpertUsage usage;
    if (traces) fs::create_directories(c.out() / "traces");
    for (auto m : modes) {
      sim::RolloutConfig rcfg;
      rcfg.mode = m;
      rcfg.horizon_s = horizon;
      const auto result = sim::run_suite(corpus, make, rcfg, [&](const Scenario& s, const sim::RolloutTrace& tr) {
        if (!traces) return;
        std::ostringstream os;
        sim::write_trace_jsonl(os, tr);
        write_text(c.out() / "traces" / (std::to_string(s.seed) + "_" + std::string(sim::to_string(m)) + ".jsonl"),
                   os.str());
      });
      for (const auto& r : result.reports) rows += sim::metrics_csv_row(r);
      const auto sum = sim::summarize(result.reports);
      summary += sim::summary_csv_row(m, sum);
      usage.merge(result.usage);
      std::printf("closed-loop %s: composite %.2f  collision-free %.3f  compliance %.3f  progress %.3f  arrived %.3f\n",
                  std::string(sim::to_string(m)).c_str(), sum.composite, sum.collision_free, sum.drivable_compliance,
                  sum.progress_ratio, sum.arrived);
    }
    write_text(c.out() / "closed_loop.csv", rows);
    write_text(c.out() / "summary.csv", summary);
    if (!usage.counts.empty()) write_text(c.out() / "expert_usage.json", usage.to_json().dump(2) + "\n");
  }
  return kOk;
}

// ---- render ----

void setup_render(Command& c) {
  c.declare("corpus", "");
  c.declare("index", "0");
  c.declare("trace", "");
  c.declare("checkpoint", "");
  c.declare("usage", "");
  c.declare("name", "scene");
  c.flag("--corpus", "corpus", "corpus holding the scenario");
  c.flag("--index", "index", "scenario index in the corpus");
  c.flag("--trace", "trace", "rollout trace (JSON Lines) to draw");
  c.flag("--checkpoint", "checkpoint", "plan the scene and draw modes and routing scores");
  c.flag("--usage", "usage", "expert_usage.json to draw as per-layer histograms");
  c.flag("--name", "name", "output file stem");
}

std::vector<std::vector<double>> usage_bars(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read usage file: " + path);
  std::vector<std::vector<double>> bars;
  try {
    const auto j = nlohmann::json::parse(f);
    for (const auto& layer : j.at("layers")) bars.push_back(layer.at("counts").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed usage file " + path + ": " + e.what());
  }
  return bars;
}

int run_render(Command& c) {
  const auto corpus = read_corpus(c.rc.str("corpus"));
  const std::size_t index = c.rc.count("index");
  if (index >= corpus.size()) throw DataError("index " + std::to_string(index) + " outside corpus of " + std::to_string(corpus.size()));
  const Scenario& s = corpus[index];

  io::RenderInput in;
  if (const std::string tp = c.rc.str("trace"); !tp.empty()) {
    std::ifstream f(tp);
    if (!f) throw DataError("cannot read trace: " + tp);
    in = io::scene_from_trace(s, io::read_trace(f));
  } else {
    in = io::scene_at_start(s);
  }
  if (const std::string ck = c.rc.str("checkpoint"); !ck.empty()) {
    if (!fs::exists(ck)) throw DataError("checkpoint not found: " + ck);
    const Planner p = Planner::load(ck);
    const PlanOutput plan = p.plan(s);
    const std::size_t m = plan.modes(), tf = p.config().future_steps;
    for (std::size_t k = 0; k < m; ++k) {
      std::vector<Vec2> path;
      for (std::size_t t = 0; t < tf; ++t)
        path.push_back({plan.trajectories[(k * tf + t) * 3], plan.trajectories[(k * tf + t) * 3 + 1]});
      in.predicted.push_back(std::move(path));
    }
    in.best_mode = plan.best_mode();
    for (const auto& d : plan.routing) {
      std::vector<double> mean(d.experts(), 0.0);
      for (std::size_t q = 0; q < d.queries(); ++q)
        for (std::size_t e = 0; e < d.experts(); ++e) mean[e] += d.scores.at(q, e) / static_cast<double>(d.queries());
      in.expert_bars.push_back(std::move(mean));
    }
    in.bar_label = "mean routing score";
  }
  if (const std::string up = c.rc.str("usage"); !up.empty()) {
    in.expert_bars = usage_bars(up);
    in.bar_label = "selection count";
  }
  c.prepare_output();
  io::RenderStats stats;
  const std::string svg = io::render_svg(in, &stats);
  write_text(c.out() / (c.rc.str("name") + ".svg"), svg);
  write_text(c.out() / "render_stats.csv", io::render_stats_csv(stats));
  std::cout << "wrote " << (c.out() / (c.rc.str("name") + ".svg")).string() << "\n";
  return kOk;
}

// ---- grad-check ----

void setup_grad_check(Command& c) {
  declare_model_keys(c.rc, "tiny");
  c.declare("scene_seed", "3");
  c.declare("agents", "2");
  c.declare("polylines", "2");
  c.declare("epsilon", "1e-05");
  c.declare("floor", "1e-08");
  c.declare("tolerance", "1e-04");
  c.declare("corrupt", "0");
  c.flag("--epsilon", "epsilon", "finite-difference step");
  c.flag("--floor", "floor", "relative-error denominator floor");
  c.flag("--tolerance", "tolerance", "pass threshold on the max relative error");
  c.flag("--corrupt", "corrupt", "negative control: perturb one tape gradient (0/1)");
}

int run_grad_check(Command& c) {
  const ModelConfig mc = resolve_model(c.rc);
  GeneratorConfig g;
  g.min_agents = g.max_agents = static_cast<int>(c.rc.count("agents"));
  g.max_polylines = static_cast<int>(c.rc.count("polylines"));
  g.topologies = {Topology::straight};
  const double eps = c.rc.real("epsilon"), floor = c.rc.real("floor"), tol = c.rc.real("tolerance");
  if (!(eps > 0.0) || !(floor > 0.0)) throw ConfigError("epsilon and floor must be positive");
  const bool corrupt = c.rc.flag("corrupt");
  const Scenario s = generate_scenario(g, c.rc.seed("scene_seed"));
  c.prepare_output();

  Planner p(mc);
  const TrainExample ex = make_example(s, mc);
  const TrainConfig tc;
  auto loss = [&](nn::Tape& t) { return total_loss(t, p, {&ex}, tc).total; };
  auto tamper = [](std::vector<nn::Tensor>& grads) {
    for (auto& g : grads)
      if (!g.empty()) {
        g[0] = g[0] * 1.05 + 1e-3;
        return;
      }
  };
  const auto t0 = std::chrono::steady_clock::now();
  const nn::GradCheckReport rep =
      nn::grad_check_report(loss, p.parameters().all(), eps, corrupt ? std::function(tamper) : nullptr, floor);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string csv = "block,elements,max_rel_error,worst_index,analytic,numeric\n";
  char buf[512];
  for (const auto& b : rep.blocks) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6e,%zu,%.9e,%.9e\n", b.name.c_str(), b.elements, b.max_rel_error,
                  b.worst_index, b.worst_analytic, b.worst_numeric);
    csv += buf;
    if (b.max_rel_error > tol)
      std::printf("FAIL %-44s %6zu elements  max rel error %.3e  analytic %.3e  numeric %.3e\n", b.name.c_str(),
                  b.elements, b.max_rel_error, b.worst_analytic, b.worst_numeric);
  }
  write_text(c.out() / "grad_check.csv", csv);
  const bool pass = rep.max_rel_error <= tol;
  std::printf("max relative error %.3e (tolerance %.1e, epsilon %.1e, floor %.1e) over %zu parameters in %.1f s: %s\n",
              rep.max_rel_error, tol, eps, floor, p.parameters().element_count(), secs, pass ? "PASS" : "FAIL");
  return pass ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carplan: motion-planner training, simulation and verification"};
  app.require_subcommand(1);
  Command gen(app, "gen-data", "generate a synthetic scenario corpus");
  Command train(app, "train", "train a planner on a corpus");
  Command eval(app, "eval", "open-loop and closed-loop evaluation");
  Command render(app, "render", "draw a scene, trace or plan as SVG");
  Command grad(app, "grad-check", "compare tape gradients with finite differences");
  setup_gen_data(gen);
  setup_train(train);
  setup_eval(eval);
  setup_render(render);
  setup_grad_check(grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  const std::vector<std::pair<Command*, int (*)(Command&)>> table = {
      {&gen, run_gen_data}, {&train, run_train}, {&eval, run_eval}, {&render, run_render}, {&grad, run_grad_check}};
  for (auto& [cmd, fn] : table) {
    if (!cmd->app->parsed()) continue;
    try {
      cmd->resolve();
      return fn(*cmd);
    } catch (const ConfigError& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return kUsage;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kData;
    }
  }
  return kUsage;
}
