#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "carplan/model/config.hpp"
#include "carplan/model/decoder.hpp"
#include "carplan/numerics/ops.hpp"
#include "carplan/scene/displacement.hpp"

namespace carplan {

struct PlanLoss {
  nn::Var loss;
  std::size_t winner = 0;
};

/// Mode whose final position is closest to the ground-truth final position; lowest index on ties.
inline std::size_t winner_mode(const nn::Tensor& traj, const nn::Tensor& future) {
  const std::size_t m = traj.rows(), tf = future.rows();
  const std::size_t last = (tf - 1) * 3;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m; ++k) {
    const double dx = traj.at(k, last) - future.at(tf - 1, 0);
    const double dy = traj.at(k, last + 1) - future.at(tf - 1, 1);
    const double d = std::hypot(dx, dy);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

/// Winner-take-all regression on the best mode plus classification toward it.
/// `traj` is [M × T_f·3], `scores` [M × 1], `future` [T_f × 3].
inline PlanLoss plan_loss(nn::Var traj, nn::Var scores, const nn::Tensor& future) {
  if (traj.cols() != future.size()) throw nn::ShapeError("plan_loss: trajectory and target horizons differ");
  PlanLoss out;
  out.winner = winner_mode(traj.value(), future);
  nn::Var reg = nn::smooth_l1(nn::slice_rows(traj, out.winner, 1), future.reshaped({1, future.size()}));
  nn::Var cls = nn::cross_entropy(scores, out.winner);
  out.loss = nn::add(reg, cls);
  return out;
}

/// Per-element weights for the displacement loss: the validity mask with
/// agent or map rows zeroed according to `mode`, repeated over (dx, dy).
inline nn::Tensor disp_weights(const DisplacementTargets& d, std::size_t num_agents, DpeMode mode) {
  const std::size_t n = d.mask.rows(), tf = d.mask.cols();
  nn::Tensor w({n, tf * 2});
  for (std::size_t e = 0; e < n; ++e) {
    const bool agent = e < num_agents;
    const bool on = mode == DpeMode::agent_map || (agent && mode == DpeMode::agent_only) ||
                    (!agent && mode == DpeMode::map_only);
    if (!on) continue;
    for (std::size_t t = 0; t < tf; ++t) w[e * tf * 2 + 2 * t] = w[e * tf * 2 + 2 * t + 1] = d.mask[e * tf + t];
  }
  return w;
}

/// Masked mean smooth-L1 between predicted [(N_a+N_p) × T_f·2] and target displacements.
inline nn::Var disp_loss(nn::Var pred, const DisplacementTargets& d, std::size_t num_agents, DpeMode mode) {
  if (pred.value().size() != d.values.size()) throw nn::ShapeError("disp_loss: prediction and target shapes differ");
  return nn::smooth_l1(pred, d.values.reshaped(pred.shape()), 1.0, disp_weights(d, num_agents, mode));
}

/// Load-balance penalty for one layer given selection fractions f and mean router probabilities P̄:
///   (N/2)·Σ(f_i² + P̄_i²) = N·Σ f_i·P̄_i + (N/2)·Σ(f_i − P̄_i)².
/// Both vectors lie on the simplex, so the value is ≥ 1 with equality only at uniform routing.
inline double balance_value(const std::vector<double>& f, const std::vector<double>& pbar) {
  const double n = static_cast<double>(f.size());
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * f[i] + pbar[i] * pbar[i];
  return 0.5 * n * s;
}

/// Selection fractions f_i = (#queries choosing i) / (Q·K).
inline std::vector<double> selection_fractions(const std::vector<const RoutingDecision*>& decisions) {
  std::vector<double> f;
  double total = 0.0;
  for (const auto* d : decisions) {
    if (f.empty()) f.assign(d->experts(), 0.0);
    for (const auto& sel : d->selected)
      for (auto i : sel) {
        f[i] += 1.0;
        total += 1.0;
      }
  }
  if (total > 0.0)
    for (auto& x : f) x /= total;
  return f;
}

/// Balance loss averaged over MoE layers. probs[l] holds the router
/// softmax of every forward in the batch for layer l, decisions[l] likewise.
inline nn::Var balance_loss(nn::Tape& t, const std::vector<std::vector<nn::Var>>& probs,
                            const std::vector<std::vector<const RoutingDecision*>>& decisions) {
  if (probs.empty()) throw ConfigError("balance_loss needs at least one expert layer");
  std::vector<nn::Var> per_layer;
  for (std::size_t l = 0; l < probs.size(); ++l) {
    const std::vector<double> f = selection_fractions(decisions[l]);
    const double n = static_cast<double>(f.size());
    double f2 = 0.0;
    for (double x : f) f2 += x * x;
    nn::Var pbar = nn::mean_rows(probs[l].size() == 1 ? probs[l].front() : nn::concat_rows(probs[l]));
    nn::Var p2 = nn::sum(nn::mul(pbar, pbar));
    per_layer.push_back(nn::add(nn::scale(p2, 0.5 * n), t.constant(nn::Tensor::scalar(0.5 * n * f2))));
  }
  return nn::scale(nn::add_scalars(per_layer), 1.0 / static_cast<double>(per_layer.size()));
}

}  // namespace carplan
