#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "carplan/model/planner.hpp"
#include "carplan/scene/displacement.hpp"
#include "carplan/training/losses.hpp"
#include "carplan/training/optimizer.hpp"

namespace carplan {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 8;
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  double lambda_disp = 1.0;
  double lambda_bal = 1.0;
  /// Balance loss on/off for expert decoders; off reproduces the unbalanced control run.
  bool balance = true;
  bool cosine = true;
  double clip_norm = 1.0;
  double beta2 = 0.999;
  std::size_t warmup = 50;
};

struct LossBreakdown {
  double l_plan = 0.0;
  double l_disp = 0.0;
  double l_bal = 0.0;
  double l_total = 0.0;
  double lambda_disp = 1.0;
  double lambda_bal = 1.0;
  bool has_disp = false;
  bool has_bal = false;
  nn::Var total;
  /// Expert selections made during this evaluation.
  ExpertUsage usage;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precomputed network inputs and supervision for one scenario.
struct TrainExample {
  SceneInputs inputs;
  nn::Tensor future;
  DisplacementTargets disp;
};

inline TrainExample make_example(const Scenario& s, const ModelConfig& cfg) {
  if (static_cast<std::size_t>(s.future_steps) < cfg.future_steps)
    throw ScenarioError("scenario horizon " + std::to_string(s.future_steps) + " is shorter than the model horizon " +
                        std::to_string(cfg.future_steps));
  TrainExample ex{build_inputs(s, cfg.history_steps), av_future(s, cfg.future_steps), {}};
  Scenario clipped = s;
  clipped.future_steps = static_cast<int>(cfg.future_steps);
  ex.disp = compute_displacement_targets(clipped);
  return ex;
}

/// Eq.-5 style objective over a batch: mean plan loss, mean displacement loss
/// (when the model has a displacement head), and the batch balance loss
/// (when the decoder has experts and balancing is on).
inline LossBreakdown total_loss(nn::Tape& t, const Planner& model, const std::vector<const TrainExample*>& batch,
                                const TrainConfig& tc) {
  const ModelConfig& mc = model.config();
  LossBreakdown out;
  out.lambda_disp = tc.lambda_disp;
  out.lambda_bal = tc.lambda_bal;
  out.has_disp = mc.dpe_enabled();
  out.has_bal = mc.moe() && tc.balance;
  std::vector<nn::Var> plan_terms, disp_terms;
  std::vector<std::vector<nn::Var>> probs;
  std::vector<std::vector<const RoutingDecision*>> decisions;
  std::vector<ForwardResult> results;
  results.reserve(batch.size());
  for (const auto* ex : batch) {
    results.push_back(model.forward(t, ex->inputs, out.has_disp));
    const ForwardResult& r = results.back();
    out.usage.add(r.decoder.decisions);
    plan_terms.push_back(plan_loss(r.decoder.trajectories, r.decoder.scores, ex->future).loss);
    if (out.has_disp) disp_terms.push_back(disp_loss(r.displacements, ex->disp, ex->inputs.num_agents(), mc.dpe));
    if (out.has_bal) {
      probs.resize(r.decoder.router_probs.size());
      decisions.resize(r.decoder.decisions.size());
      for (std::size_t l = 0; l < probs.size(); ++l) {
        probs[l].push_back(r.decoder.router_probs[l]);
        decisions[l].push_back(&r.decoder.decisions[l]);
      }
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  nn::Var lp = nn::scale(nn::add_scalars(plan_terms), inv_b);
  out.l_plan = lp.value().item();
  nn::Var total = lp;
  if (out.has_disp) {
    nn::Var ld = nn::scale(nn::add_scalars(disp_terms), inv_b);
    out.l_disp = ld.value().item();
    total = nn::add(total, nn::scale(ld, tc.lambda_disp));
  }
  if (out.has_bal) {
    nn::Var lb = balance_loss(t, probs, decisions);
    out.l_bal = lb.value().item();
    total = nn::add(total, nn::scale(lb, tc.lambda_bal));
  }
  out.total = total;
  out.l_total = total.value().item();
  return out;
}

struct StepRecord {
  std::size_t step = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
};

inline std::string csv_header() { return "step,l_plan,l_disp,l_bal,l_total,grad_norm\n"; }

inline std::string csv_row(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step, r.loss.l_plan, r.loss.l_disp, r.loss.l_bal,
                r.loss.l_total, r.grad_norm);
  return buf;
}

/// Mini-batch training loop: reshuffles every epoch from a seeded generator.
class Trainer {
 public:
  Trainer(Planner& model, TrainConfig cfg)
      : model_(model),
        cfg_(cfg),
        opt_(model.parameters().all(), AdamConfig{cfg.lr, 0.9, cfg.beta2, 1e-8, cfg.clip_norm, cfg.cosine, cfg.steps, 0.0, cfg.warmup}),
        rng_(cfg.seed ^ 0xC0FFEEULL) {}

  /// Runs `cfg.steps` steps; `on_step` sees every record.
  void run(const std::vector<TrainExample>& data, const std::function<void(const StepRecord&)>& on_step = {}) {
    if (data.empty()) throw TrainingError("training corpus is empty");
    for (std::size_t s = 0; s < cfg_.steps; ++s) {
      StepRecord rec = step(data);
      if (on_step) on_step(rec);
    }
  }

  StepRecord step(const std::vector<TrainExample>& data) {
    std::vector<const TrainExample*> batch;
    const std::size_t bs = std::min(cfg_.batch_size, data.size());
    for (std::size_t i = 0; i < bs; ++i) batch.push_back(&data[next_index(data.size())]);
    model_.parameters().zero_grad();
    StepRecord rec;
    rec.step = ++step_;
    {
      nn::Tape t;
      rec.loss = total_loss(t, model_, batch, cfg_);
      if (!std::isfinite(rec.loss.l_total))
        throw TrainingError("non-finite loss at step " + std::to_string(rec.step) + ": l_plan=" +
                            std::to_string(rec.loss.l_plan) + " l_disp=" + std::to_string(rec.loss.l_disp) +
                            " l_bal=" + std::to_string(rec.loss.l_bal));
      t.backward(rec.loss.total);
      rec.loss.total = nn::Var{};
    }
    rec.grad_norm = opt_.step();
    if (!std::isfinite(rec.grad_norm)) throw TrainingError("non-finite gradient at step " + std::to_string(rec.step));
    return rec;
  }

 private:
  std::size_t next_index(std::size_t n) {
    if (cursor_ >= order_.size()) {
      order_.resize(n);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

  Planner& model_;
  TrainConfig cfg_;
  Adam opt_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
};

}  // namespace carplan
