#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "../support/scenes.hpp"
#include "carplan/model/planner.hpp"
#include "carplan/scene/serialize.hpp"
#include "carplan/simulator/metrics.hpp"
#include "carplan/simulator/rollout.hpp"

namespace fs = std::filesystem;
using namespace carplan;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

/// Runs the CLI with `args`, capturing stdout and stderr together.
CliRun cli(const std::string& args, const std::string& env = "") {
  const fs::path log = fs::temp_directory_path() / ("carplan_cli_" + std::to_string(::getpid()) + ".log");
  const std::string cmd = env + " \"" CARPLAN_CLI_PATH "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  fs::remove(log);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::size_t matches(const std::string& text, const std::string& pattern) {
  const std::regex re(pattern);
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(text.begin(), text.end(), re), std::sregex_iterator()));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("carplan_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  /// A small corpus at `name`/corpus.jsonl.
  std::string corpus(const std::string& name, int count, const std::string& extra = "") {
    const CliRun r = cli("gen-data --count " + std::to_string(count) + " --seed 5 --out " + path(name) + " " + extra);
    EXPECT_EQ(r.code, 0) << r.output;
    return path(name + "/corpus.jsonl");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("fly").code, 1);
  EXPECT_EQ(cli("train --no-such-flag").code, 1);
  EXPECT_EQ(cli("gen-data --set nonsense=1 --out " + path("g")).code, 1);
  EXPECT_EQ(cli("gen-data --set count --out " + path("g")).code, 1);
  EXPECT_EQ(cli("gen-data --count many --out " + path("g")).code, 1);
  EXPECT_EQ(cli("gen-data --topologies straight,spiral --out " + path("g")).code, 1);
  EXPECT_EQ(cli("train --corpus x --preset huge --out " + path("t")).code, 1);
  EXPECT_EQ(cli("eval --corpus x --mode sideways --out " + path("e")).code, 1);
  EXPECT_EQ(cli("gen-data --config " + path("absent.cfg") + " --out " + path("g")).code, 1);
}

TEST_F(Cli, HelpExitsWithZero) {
  const CliRun r = cli("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"gen-data", "train", "eval", "render", "grad-check"})
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
}

TEST_F(Cli, GenDataWritesCorpusManifestAndConfig) {
  const std::string c = corpus("g", 4);
  const auto loaded = load_corpus(c);
  ASSERT_EQ(loaded.size(), 4u);
  const auto manifest = lines(slurp(path("g/manifest.csv")));
  ASSERT_EQ(manifest.size(), 5u);
  EXPECT_EQ(manifest[0], "index,seed,topology,agents,polylines,centerlines");
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(manifest[i + 1].rfind(std::to_string(i) + "," + std::to_string(loaded[i].seed) + ",", 0), 0u);
    EXPECT_NE(manifest[i + 1].find(std::string(to_string(loaded[i].topology))), std::string::npos);
  }
  const std::string cfg = slurp(path("g/resolved_config.txt"));
  EXPECT_NE(cfg.find("count=4\n"), std::string::npos);
  EXPECT_NE(cfg.find("seed=5\n"), std::string::npos);
}

TEST_F(Cli, GenDataIsByteDeterministic) {
  corpus("a", 3);
  corpus("b", 3);
  EXPECT_EQ(slurp(path("a/corpus.jsonl")), slurp(path("b/corpus.jsonl")));
  EXPECT_EQ(slurp(path("a/manifest.csv")), slurp(path("b/manifest.csv")));
}

TEST_F(Cli, StraightOnlyCorpusIsTaggedStraight) {
  for (const auto& s : load_corpus(corpus("g", 5, "--topologies straight"))) EXPECT_EQ(s.topology, Topology::straight);
}

TEST_F(Cli, OutputRootEnvironmentVariableSetsDefaultDirectory) {
  const CliRun r = cli("gen-data --count 1", "CARPLAN_OUTPUT_ROOT=\"" + path("root") + "\"");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(path("root/gen-data/corpus.jsonl")));
}

TEST_F(Cli, ConfigPrecedenceIsFileThenSetThenFlag) {
  const std::string c = corpus("g", 2);
  std::ofstream(path("run.cfg")) << "# tiny run\npreset = tiny\nsteps = 3\nbatch_size = 2\n";
  CliRun r = cli("train --corpus " + c + " --config " + path("run.cfg") + " --out " + path("t1"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(lines(slurp(path("t1/train_log.csv"))).size(), 4u);
  r = cli("train --corpus " + c + " --config " + path("run.cfg") + " --set steps=4 --out " + path("t2"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(lines(slurp(path("t2/train_log.csv"))).size(), 5u);
  r = cli("train --corpus " + c + " --config " + path("run.cfg") + " --set steps=4 --steps 2 --out " + path("t3"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(lines(slurp(path("t3/train_log.csv"))).size(), 3u);
  const std::string cfg = slurp(path("t3/resolved_config.txt"));
  EXPECT_NE(cfg.find("steps=2\n"), std::string::npos);
  EXPECT_NE(cfg.find("preset=tiny\n"), std::string::npos);
  EXPECT_NE(cfg.find("future_steps=5\n"), std::string::npos);
}

TEST_F(Cli, TrainWritesLogCheckpointAndUsage) {
  const std::string c = corpus("g", 3);
  const CliRun r = cli("train --corpus " + c + " --preset tiny --steps 5 --batch 2 --out " + path("t"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto log = lines(slurp(path("t/train_log.csv")));
  ASSERT_EQ(log.size(), 6u);
  EXPECT_EQ(log[0], "step,l_plan,l_disp,l_bal,l_total,grad_norm");
  EXPECT_EQ(log[5].rfind("5,", 0), 0u);
  const Planner p = Planner::load(path("t/checkpoint.bin"));
  EXPECT_EQ(p.config().future_steps, 5u);
  const auto usage = nlohmann::json::parse(slurp(path("t/expert_usage.json")));
  EXPECT_EQ(usage.at("experts").get<int>(), 4);
  // 5 steps, batch 2, 2 modes, top-2, every layer after the first.
  for (const auto& layer : usage.at("layers")) {
    std::size_t total = 0;
    for (auto n : layer.at("counts")) total += n.get<std::size_t>();
    EXPECT_EQ(total, 5u * 2u * 2u * 2u);
  }
}

TEST_F(Cli, TrainIsByteDeterministic) {
  const std::string c = corpus("g", 3);
  for (const char* out : {"t1", "t2"})
    ASSERT_EQ(cli("train --corpus " + c + " --preset tiny --steps 4 --batch 2 --out " + path(out)).code, 0);
  EXPECT_EQ(slurp(path("t1/train_log.csv")), slurp(path("t2/train_log.csv")));
  EXPECT_EQ(slurp(path("t1/checkpoint.bin")), slurp(path("t2/checkpoint.bin")));
}

TEST_F(Cli, ZeroLearningRateLeavesWeightsUnchanged) {
  const std::string c = corpus("g", 2);
  const CliRun r = cli("train --corpus " + c + " --preset tiny --steps 3 --lr 0 --out " + path("t"));
  ASSERT_EQ(r.code, 0) << r.output;
  const Planner trained = Planner::load(path("t/checkpoint.bin"));
  EXPECT_EQ(trained.checkpoint_bytes(), Planner(ModelConfig::tiny()).checkpoint_bytes());
  const auto log = lines(slurp(path("t/train_log.csv")));
  ASSERT_EQ(log.size(), 4u);
  for (const auto& row : log) EXPECT_EQ(row.find("nan"), std::string::npos) << row;
}

TEST_F(Cli, DataErrorsExitWithTwo) {
  EXPECT_EQ(cli("train --corpus " + path("missing.jsonl") + " --out " + path("t")).code, 2);
  EXPECT_EQ(cli("eval --corpus " + path("missing.jsonl") + " --planner expert --out " + path("e")).code, 2);
  std::ofstream(path("bad.jsonl")) << "{\"seed\": 1}\nnot json\n";
  EXPECT_EQ(cli("eval --corpus " + path("bad.jsonl") + " --planner expert --out " + path("e")).code, 2);
  const std::string c = corpus("g", 1);
  EXPECT_EQ(cli("eval --corpus " + c + " --checkpoint " + path("bad.jsonl") + " --out " + path("e")).code, 2);
  EXPECT_EQ(cli("eval --corpus " + c + " --checkpoint " + path("none.bin") + " --out " + path("e")).code, 2);
  EXPECT_EQ(cli("render --corpus " + c + " --index 7 --out " + path("r")).code, 2);
  EXPECT_EQ(cli("render --corpus " + c + " --trace " + path("bad.jsonl") + " --out " + path("r")).code, 2);
}

TEST_F(Cli, EmptyCorpus) {
  const std::string c = corpus("g", 0);
  EXPECT_TRUE(load_corpus(c).empty());
  EXPECT_EQ(cli("train --corpus " + c + " --preset tiny --out " + path("t")).code, 2);
  const CliRun r = cli("eval --corpus " + c + " --planner expert --out " + path("e"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(lines(slurp(path("e/closed_loop.csv"))).size(), 1u);
  EXPECT_EQ(lines(slurp(path("e/open_loop.csv"))).size(), 1u);
  EXPECT_EQ(lines(slurp(path("e/summary.csv")))[1].rfind("NR,0,", 0), 0u);
}

TEST_F(Cli, HorizonMismatchIsADataError) {
  const std::string c = corpus("g", 2);
  ASSERT_EQ(cli("train --corpus " + c + " --preset tiny --steps 1 --out " + path("t")).code, 0);
  const std::string short_c = corpus("s", 2, "--set future_steps=3");
  const CliRun r = cli("eval --corpus " + short_c + " --checkpoint " + path("t/checkpoint.bin") + " --out " + path("e"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("horizon mismatch"), std::string::npos) << r.output;
  EXPECT_EQ(cli("train --corpus " + short_c + " --preset tiny --set future_steps=5 --out " + path("t2")).code, 2);
}

TEST_F(Cli, ExpertEvalScoresPerfectlyInBothModes) {
  const std::string c = corpus("g", 3, "--topologies straight");
  const CliRun r = cli("eval --corpus " + c + " --planner expert --mode both --set traces=1 --out " + path("e"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = lines(slurp(path("e/closed_loop.csv")));
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0], sim::metrics_csv_header().substr(0, sim::metrics_csv_header().size() - 1));
  const auto summary = lines(slurp(path("e/summary.csv")));
  ASSERT_EQ(summary.size(), 3u);
  // mode,scenarios,collision_free,drivable_compliance,progress_ratio,arrived,...
  std::vector<std::string> nr;
  std::stringstream fields(summary[1]);
  for (std::string f; std::getline(fields, f, ',');) nr.push_back(f);
  ASSERT_GE(nr.size(), 6u);
  EXPECT_EQ(nr[0], "NR");
  EXPECT_EQ(nr[1], "3");
  EXPECT_EQ(nr[2], "1.000000");
  EXPECT_EQ(nr[3], "1.000000");
  EXPECT_NEAR(std::stod(nr[4]), 1.0, 1e-3);
  EXPECT_EQ(nr[5], "1.000000");
  EXPECT_EQ(summary[2].rfind("R,3,", 0), 0u);
  const auto open = lines(slurp(path("e/open_loop.csv")));
  ASSERT_EQ(open.size(), 4u);
  for (std::size_t i = 1; i < open.size(); ++i)
    EXPECT_NE(open[i].find(",0.000000,0.000000,0.000000"), std::string::npos) << open[i];
  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(path("e/traces"))) traces += e.path().extension() == ".jsonl";
  EXPECT_EQ(traces, 6u);
}

TEST_F(Cli, ModelEvalIsByteDeterministic) {
  const std::string c = corpus("g", 2);
  ASSERT_EQ(cli("train --corpus " + c + " --preset tiny --steps 2 --out " + path("t")).code, 0);
  for (const char* out : {"e1", "e2"})
    ASSERT_EQ(cli("eval --corpus " + c + " --checkpoint " + path("t/checkpoint.bin") + " --mode both --out " + path(out)).code, 0);
  for (const char* f : {"open_loop.csv", "closed_loop.csv", "summary.csv", "expert_usage.json"})
    EXPECT_EQ(slurp(path(std::string("e1/") + f)), slurp(path(std::string("e2/") + f))) << f;
}

TEST_F(Cli, RenderDrawsOneBarPerExpertPerLayer) {
  const std::string c = corpus("g", 1);
  ASSERT_EQ(cli("train --corpus " + c + " --preset tiny --steps 1 --out " + path("t")).code, 0);
  const CliRun r = cli("render --corpus " + c + " --checkpoint " + path("t/checkpoint.bin") + " --out " + path("r"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string svg = slurp(path("r/scene.svg"));
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  const ModelConfig tiny = ModelConfig::tiny();
  const std::size_t moe_layers = matches(svg, "<g class=\"expert-layer\"");
  EXPECT_EQ(moe_layers, tiny.decoder_layers - 1);
  EXPECT_EQ(matches(svg, "class=\"expert-bar\""), moe_layers * tiny.experts);
  EXPECT_EQ(matches(svg, "class=\"pred( best)?\""), tiny.modes);
  EXPECT_EQ(matches(svg, "class=\"pred best\""), 1u);
  EXPECT_EQ(matches(svg, "class=\"gt\""), 1u);
  EXPECT_EQ(matches(svg, "class=\"[a-z]+ collision\""), 0u);
  const auto stats = lines(slurp(path("r/render_stats.csv")));
  ASSERT_EQ(stats.size(), 2u);
  EXPECT_EQ(stats[0], "polylines,agents,colliding,trajectories,expert_layers,expert_bars");
}

TEST_F(Cli, RenderHighlightsCollidingAgentsFromATrace) {
  // A vehicle closes on a stationary ego from behind and, not reacting, hits it.
  const Scenario s = testing_support::straight_scene(0.0, {{-30.0, 0.0, 10.0}, {60.0, 3.5, 8.0}});
  save_corpus(path("scene.jsonl"), {s});
  sim::RolloutConfig cfg;
  cfg.mode = sim::SimMode::non_reactive;
  const sim::PlanFn hold = [](const Scenario&, const Frame&, int) {
    PlanOutput p;
    p.trajectories = nn::Tensor({1, 20, 3});
    p.scores = nn::Tensor({1}, 0.0);
    return p;
  };
  const sim::RolloutTrace tr = sim::rollout(hold, s, cfg);
  ASSERT_FALSE(sim::score(tr, s, cfg.arrival_fraction).collision_free);
  {
    std::ofstream f(path("trace.jsonl"));
    sim::write_trace_jsonl(f, tr);
  }
  const CliRun r = cli("render --corpus " + path("scene.jsonl") + " --trace " + path("trace.jsonl") + " --name hit --out " + path("r"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string svg = slurp(path("r/hit.svg"));
  EXPECT_EQ(matches(svg, "class=\"agent collision\""), 1u);
  EXPECT_EQ(matches(svg, "class=\"agent\""), 1u);
  EXPECT_EQ(matches(svg, "class=\"ego collision\""), 1u);
  EXPECT_EQ(matches(svg, "class=\"executed\""), 1u);
  const auto stats = lines(slurp(path("r/render_stats.csv")));
  ASSERT_EQ(stats.size(), 2u);
  EXPECT_EQ(stats[1].substr(stats[1].find(',') + 1, 4), "2,1,");
}

TEST_F(Cli, RenderUsageHistogram) {
  const std::string c = corpus("g", 2);
  ASSERT_EQ(cli("train --corpus " + c + " --preset tiny --steps 2 --out " + path("t")).code, 0);
  const CliRun r = cli("render --corpus " + c + " --usage " + path("t/expert_usage.json") + " --out " + path("r"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto usage = nlohmann::json::parse(slurp(path("t/expert_usage.json")));
  const std::string svg = slurp(path("r/scene.svg"));
  EXPECT_EQ(matches(svg, "class=\"expert-bar\""), usage.at("layers").size() * usage.at("experts").get<std::size_t>());
  const auto& first = usage.at("layers")[0].at("counts");
  for (std::size_t e = 0; e < first.size(); ++e) {
    const std::string bar = "data-expert=\"" + std::to_string(e) + "\" data-value=\"" + std::to_string(first[e].get<std::size_t>()) + ".00\"";
    EXPECT_NE(svg.find(bar), std::string::npos) << bar;
  }
}

TEST_F(Cli, GradCheckPassesAtLooseFloorAndCatchesCorruption) {
  CliRun r = cli("grad-check --floor 1e-5 --out " + path("g1"));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("PASS"), std::string::npos);
  const auto rows = lines(slurp(path("g1/grad_check.csv")));
  EXPECT_EQ(rows[0], "block,elements,max_rel_error,worst_index,analytic,numeric");
  EXPECT_GT(rows.size(), 100u);

  r = cli("grad-check --floor 1e-5 --corrupt 1 --out " + path("g2"));
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("FAIL"), std::string::npos);
}

TEST_F(Cli, UntrainedCheckpointGivesFiniteMetrics) {
  const std::string c = corpus("g", 2);
  ASSERT_EQ(cli("train --corpus " + c + " --preset tiny --steps 0 --out " + path("t")).code, 0);
  const CliRun r = cli("eval --corpus " + c + " --checkpoint " + path("t/checkpoint.bin") + " --mode both --out " + path("e"));
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"open_loop.csv", "closed_loop.csv", "summary.csv"}) {
    const std::string text = slurp(path(std::string("e/") + f));
    EXPECT_GT(lines(text).size(), 1u) << f;
    EXPECT_EQ(text.find("nan"), std::string::npos) << f;
    EXPECT_EQ(text.find("inf"), std::string::npos) << f;
  }
}

TEST_F(Cli, EmptySceneRendersMapOnly) {
  const std::string c = corpus("g", 1, "--set min_agents=0 --set max_agents=0");
  ASSERT_TRUE(load_corpus(c).front().agents.empty());
  const CliRun r = cli("render --corpus " + c + " --out " + path("r"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string svg = slurp(path("r/scene.svg"));
  EXPECT_EQ(matches(svg, "class=\"agent( collision)?\""), 0u);
  EXPECT_EQ(matches(svg, "class=\"pred"), 0u);
  EXPECT_EQ(matches(svg, "class=\"expert-bar\""), 0u);
  EXPECT_GT(matches(svg, "class=\"(lane_center|road_boundary|crosswalk)\""), 0u);
}
