#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "carplan/model/planner.hpp"
#include "carplan/scene/generator.hpp"
#include "carplan/training/losses.hpp"

using namespace carplan;

namespace {

Scenario scene(std::uint64_t seed, int agents = 3) {
  GeneratorConfig g;
  g.min_agents = agents;
  g.max_agents = agents;
  g.max_polylines = 6;
  return generate_scenario(g, seed);
}

ModelConfig small() {
  ModelConfig c = ModelConfig::tiny();
  c.d_model = 16;
  c.heads = 4;
  return c;
}

nn::Tensor encode(const Planner& p, const SceneInputs& in) {
  nn::Tape t(false);
  return p.encoder().encode(t, in).features.value();
}

nn::Tensor rows(const nn::Tensor& x, std::size_t first, std::size_t n) {
  nn::Tensor out({n, x.cols()});
  std::copy_n(x.raw().begin() + static_cast<std::ptrdiff_t>(first * x.cols()), n * x.cols(), out.raw().begin());
  return out;
}

double largest_gap(const nn::Tensor& a, const nn::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Encoder, TokenLayoutAndFeatureWidth) {
  const Scenario s = scene(1);
  Planner p(small());
  const SceneInputs in = p.inputs(s);
  const nn::Tensor f = encode(p, in);
  EXPECT_EQ(f.rows(), 1 + s.agents.size() + s.map.size());
  EXPECT_EQ(f.cols(), 16u);
}

TEST(Encoder, ZeroAgentsIsValid) {
  Scenario s = scene(2, 0);
  ASSERT_TRUE(s.agents.empty());
  Planner p(small());
  const nn::Tensor f = encode(p, p.inputs(s));
  EXPECT_EQ(f.rows(), 1 + s.map.size());
  for (double v : f.raw()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Encoder, IdenticalHistoriesGiveIdenticalTokens) {
  Scenario s = scene(3, 1);
  s.agents.push_back(s.agents.front());
  Planner p(small());
  const nn::Tensor f = encode(p, p.inputs(s));
  EXPECT_EQ(rows(f, 1, 1), rows(f, 2, 1));
}

TEST(Encoder, AvPastStatesAreNotRead) {
  Scenario s = scene(4);
  Planner p(small());
  const nn::Tensor before = encode(p, p.inputs(s));
  for (int i = 0; i < s.current_index(); ++i) {
    auto& st = s.av.states[static_cast<std::size_t>(i)];
    st.position = st.position + Vec2{3.0, -2.0};
    st.velocity = Vec2{-5.0, 1.0};
    st.heading += 0.7;
  }
  EXPECT_EQ(encode(p, p.inputs(s)), before);
}

TEST(Encoder, PaddingTokensDoNotChangeValidOutputs) {
  const Scenario s = scene(5);
  Planner p(small());
  const SceneInputs in = p.inputs(s);
  const nn::Tensor plain = encode(p, in);
  const std::size_t na = in.num_agents(), np = in.num_map();
  for (double junk : {0.0, 3.0, -250.0}) {
    const nn::Tensor padded = encode(p, with_padding(in, 4, 3, junk));
    EXPECT_LE(largest_gap(rows(padded, 0, 1 + na), rows(plain, 0, 1 + na)), 1e-12);
    EXPECT_LE(largest_gap(rows(padded, 1 + na + 4, np), rows(plain, 1 + na, np)), 1e-12);
  }
}

TEST(Encoder, AgentPermutationPermutesTokens) {
  const Scenario s = scene(6, 4);
  Scenario r = s;
  std::reverse(r.agents.begin(), r.agents.end());
  Planner p(small());
  const nn::Tensor a = encode(p, p.inputs(s));
  const nn::Tensor b = encode(p, p.inputs(r));
  const std::size_t n = s.agents.size();
  EXPECT_LE(largest_gap(rows(a, 0, 1), rows(b, 0, 1)), 1e-10);
  for (std::size_t i = 0; i < n; ++i) EXPECT_LE(largest_gap(rows(a, 1 + i, 1), rows(b, n - i, 1)), 1e-10);
  EXPECT_LE(largest_gap(rows(a, 1 + n, s.map.size()), rows(b, 1 + n, s.map.size())), 1e-10);
}

TEST(Encoder, ValidAgentWithoutHistoryIsRejected) {
  Scenario s = scene(7, 1);
  Planner p(small());
  SceneInputs in = p.inputs(s);
  std::fill(in.agent_step_valid.begin(), in.agent_step_valid.end(), 0);
  nn::Tape t(false);
  EXPECT_THROW(p.encoder().encode(t, in), ScenarioError);
}

TEST(DisplacementHead, OutputShapeMatchesTargets) {
  const Scenario s = scene(8);
  ModelConfig c = small();
  Planner p(c);
  const SceneInputs in = p.inputs(s);
  nn::Tape t(false);
  ForwardResult r = p.forward(t, in, true);
  ASSERT_TRUE(r.has_displacements);
  EXPECT_EQ(r.displacements.rows(), s.agents.size() + s.map.size());
  EXPECT_EQ(r.displacements.cols(), c.future_steps * 2);
}

TEST(DisplacementHead, ZeroHeadPredictsThePrior) {
  const Scenario s = scene(9);
  Planner p(small());
  for (auto* prm : p.parameters().all())
    if (prm->name.rfind("disp_head.fc2.", 0) == 0) std::fill(prm->value.raw().begin(), prm->value.raw().end(), 0.0);
  nn::Tape t(false);
  const SceneInputs in = p.inputs(s);
  ForwardResult r = p.forward(t, in, true);
  EXPECT_EQ(r.displacements.value(), p.encoder().displacement_prior(in));
}

TEST(DisplacementHead, PriorMatchesTargetsForConstantVelocityScene) {
  // Every track moves at constant velocity: the prior is the exact target.
  ModelConfig c = small();
  Scenario s = scene(24, 2);
  const std::size_t total = static_cast<std::size_t>(s.total_steps());
  const int now = s.current_index();
  auto straighten = [&](AgentTrack& a, Vec2 p0, Vec2 v) {
    for (std::size_t i = 0; i < total; ++i) {
      a.states[i].position = p0 + v * (kDt * (static_cast<double>(i) - now));
      a.states[i].velocity = v;
      a.valid[i] = true;
    }
  };
  straighten(s.av, {0.0, 0.0}, {8.0, 0.0});
  straighten(s.agents[0], {20.0, 3.5}, {6.0, 0.5});
  straighten(s.agents[1], {-15.0, 0.0}, {9.0, 0.0});
  Scenario clipped = s;
  clipped.future_steps = static_cast<int>(c.future_steps);
  const DisplacementTargets d = compute_displacement_targets(clipped);
  Planner p(c);
  const nn::Tensor prior = p.encoder().displacement_prior(p.inputs(s));
  ASSERT_EQ(prior.size(), d.values.size());
  for (std::size_t i = 0; i < prior.size(); ++i) EXPECT_NEAR(prior[i], d.values[i], 1e-9) << i;
}

TEST(DisplacementHead, EvaluatingItLeavesPlanBitIdentical) {
  Planner p(small());
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const SceneInputs in = p.inputs(scene(seed));
    const PlanOutput off = p.plan(in, false);
    const PlanOutput on = p.plan(in, true);
    EXPECT_EQ(off.trajectories, on.trajectories);
    EXPECT_EQ(off.scores, on.scores);
  }
}

TEST(DisplacementHead, DisabledModeHasNoHead) {
  ModelConfig c = small();
  c.dpe = DpeMode::none;
  Planner p(c);
  EXPECT_FALSE(p.encoder().has_disp_head());
  EXPECT_EQ(p.parameters().find("disp_head.fc1.weight"), nullptr);
  nn::Tape t(false);
  const SceneInputs in = p.inputs(scene(21));
  const SceneFeatures f = p.encoder().encode(t, in);
  EXPECT_THROW(p.encoder().predict_displacements(t, in, f), ConfigError);
}

TEST(DisplacementHead, CheckpointWithoutHeadStillPlans) {
  Planner p(small());
  nn::Checkpoint ck = nn::decode_checkpoint(p.checkpoint_bytes());
  std::erase_if(ck.arrays, [](const auto& a) { return a.first.rfind("disp_head.", 0) == 0; });
  Planner q = Planner::from_checkpoint(nn::encode_checkpoint(ck));
  const SceneInputs in = p.inputs(scene(22));
  EXPECT_EQ(p.plan(in).trajectories, q.plan(in).trajectories);
  EXPECT_EQ(p.plan(in).scores, q.plan(in).scores);
}

TEST(DisplacementHead, LossGradientReachesEveryEncoderLayer) {
  const Scenario s = scene(23);
  ModelConfig c = small();
  Planner p(c);
  Scenario clipped = s;
  clipped.future_steps = static_cast<int>(c.future_steps);
  const DisplacementTargets d = compute_displacement_targets(clipped);
  p.parameters().zero_grad();
  {
    nn::Tape t;
    const SceneInputs in = p.inputs(s);
    ForwardResult r = p.forward(t, in, true);
    t.backward(disp_loss(r.displacements, d, in.num_agents(), c.dpe));
  }
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    double norm = 0.0;
    const std::string prefix = "enc.layer" + std::to_string(l) + ".";
    for (const auto* prm : p.parameters().all())
      if (prm->name.rfind(prefix, 0) == 0)
        for (double g : prm->grad.raw()) norm += g * g;
    EXPECT_GT(norm, 0.0) << prefix;
  }
  for (const auto* prm : p.parameters().all()) {
    if (prm->name.rfind("dec.", 0) != 0) continue;
    for (double g : prm->grad.raw()) ASSERT_EQ(g, 0.0) << prm->name;
  }
}
