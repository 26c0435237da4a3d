#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "carplan/model/config.hpp"
#include "carplan/model/encoder.hpp"
#include "carplan/model/features.hpp"
#include "carplan/numerics/layers.hpp"

namespace carplan {

/// Indices of the K largest entries of `scores`, by descending score; equal
/// scores resolve to the lower index.
inline std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) throw ConfigError("top_k larger than the number of experts");
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(k);
  return idx;
}

/// Router output for one MoE layer.
struct RoutingDecision {
  nn::Tensor scores;                           // [M × N], rows sum to 1
  std::vector<std::vector<std::size_t>> selected;  // [M][K]
  std::vector<std::vector<double>> weights;        // [M][K], scores at the selected indices

  std::size_t queries() const { return selected.size(); }
  std::size_t experts() const { return scores.cols(); }
};

inline RoutingDecision make_decision(const nn::Tensor& probs, std::size_t k) {
  RoutingDecision d;
  d.scores = probs;
  const std::size_t m = probs.rows(), n = probs.cols();
  for (std::size_t q = 0; q < m; ++q) {
    std::span<const double> row(probs.raw().data() + q * n, n);
    d.selected.push_back(top_k_indices(row, k));
    std::vector<double> w;
    for (auto i : d.selected.back()) w.push_back(row[i]);
    d.weights.push_back(std::move(w));
  }
  return d;
}

/// Routed and shared FFN experts of one decoder layer.
struct ExpertBank {
  std::vector<nn::Mlp2> routed;
  std::vector<nn::Mlp2> shared;

  ExpertBank() = default;
  ExpertBank(nn::ParameterStore& store, nn::Initializer& init, const std::string& name, const ModelConfig& c) {
    for (std::size_t i = 0; i < c.experts; ++i)
      routed.emplace_back(store, init, name + ".expert" + std::to_string(i), c.d_model, c.expert_hidden, c.d_model);
    for (std::size_t i = 0; i < c.shared_experts; ++i)
      shared.emplace_back(store, init, name + ".shared" + std::to_string(i), c.d_model, c.expert_hidden, c.d_model);
  }
};

/// F = Σ_s S_s(q) + Σ_{i ∈ E(q)} R_i · E_i(q), row by row. `probs` is the
/// router softmax on the tape; its selected entries carry the mixing weights.
inline nn::Var expert_mix(nn::Tape& t, nn::Var q, nn::Var probs, const RoutingDecision& d, const ExpertBank& bank) {
  const std::size_t m = q.rows(), n = bank.routed.size();
  if (d.queries() != m) throw nn::ShapeError("expert_mix: routing decision covers a different number of queries");
  std::vector<nn::Var> shared_terms;
  for (const auto& s : bank.shared) shared_terms.push_back(s(t, q));
  std::vector<nn::Var> rows;
  for (std::size_t r = 0; r < m; ++r) {
    nn::Var x = nn::slice_rows(q, r, 1);
    std::vector<nn::Var> terms;
    for (auto i : d.selected[r]) terms.push_back(nn::mul_scalar(bank.routed[i](t, x), nn::pick(probs, r * n + i)));
    if (terms.empty()) {
      rows.push_back(t.constant(nn::Tensor({1, q.cols()})));
    } else {
      rows.push_back(nn::add_scalars(terms));
    }
  }
  nn::Var out = nn::concat_rows(rows);
  for (const auto& s : shared_terms) out = nn::add(out, s);
  return out;
}

/// Self-attention over queries followed by cross-attention into the scene, both pre-norm residual.
struct QueryAttention {
  nn::LayerNorm norm_sa, norm_ca;
  nn::MultiHeadAttention sa, ca;

  QueryAttention() = default;
  QueryAttention(nn::ParameterStore& store, nn::Initializer& init, const std::string& name, const ModelConfig& c)
      : norm_sa(store, name + ".ln_sa", c.d_model),
        norm_ca(store, name + ".ln_ca", c.d_model),
        sa(store, init, name + ".sa", c.d_model, c.heads),
        ca(store, init, name + ".ca", c.d_model, c.heads) {}

  nn::Var operator()(nn::Tape& t, nn::Var q, const SceneFeatures& f) const {
    nn::Var h = norm_sa(t, q);
    q = nn::add(q, sa(t, h, h, h));
    return nn::add(q, ca(t, norm_ca(t, q), f.features, f.features, f.mask));
  }
};

struct DecoderLayer {
  bool moe = false;
  RouterKind router_kind = RouterKind::scene_aware;
  std::size_t top_k = 0;
  QueryAttention main;  // expert path (or the plain layer's attention)
  nn::LayerNorm norm_ffn;
  nn::Mlp2 ffn;          // plain layers only
  QueryAttention router_attn;  // scene-aware router only
  nn::LayerNorm router_norm;
  nn::Mlp2 router_mlp;
  ExpertBank bank;

  DecoderLayer() = default;
  DecoderLayer(nn::ParameterStore& store, nn::Initializer& init, const std::string& name, const ModelConfig& c,
               bool use_moe)
      : moe(use_moe), router_kind(c.router), top_k(c.top_k) {
    main = QueryAttention(store, init, name + ".attn", c);
    norm_ffn = nn::LayerNorm(store, name + ".ln_ffn", c.d_model);
    if (!moe) {
      ffn = nn::Mlp2(store, init, name + ".ffn", c.d_model, c.ffn_hidden, c.d_model);
      return;
    }
    if (router_kind == RouterKind::scene_aware) router_attn = QueryAttention(store, init, name + ".router_attn", c);
    router_norm = nn::LayerNorm(store, name + ".router_ln", c.d_model);
    router_mlp = nn::Mlp2(store, init, name + ".router_mlp", c.d_model, c.d_model, c.experts);
    bank = ExpertBank(store, init, name + ".bank", c);
  }

  /// Router softmax over experts, [M × N].
  nn::Var route(nn::Tape& t, nn::Var q, const SceneFeatures& f) const {
    nn::Var r = router_kind == RouterKind::scene_aware ? router_attn(t, q, f) : q;
    return nn::softmax_rows(router_mlp(t, router_norm(t, r)));
  }

  struct Output {
    nn::Var queries;
    nn::Var probs;  // invalid for plain layers
    RoutingDecision decision;
  };

  Output operator()(nn::Tape& t, nn::Var q, const SceneFeatures& f) const {
    Output out;
    if (!moe) {
      q = main(t, q, f);
      out.queries = nn::add(q, ffn(t, norm_ffn(t, q)));
      return out;
    }
    out.probs = route(t, q, f);
    out.decision = make_decision(out.probs.value(), top_k);
    nn::Var qe = main(t, q, f);
    out.queries = nn::add(qe, expert_mix(t, norm_ffn(t, qe), out.probs, out.decision, bank));
    return out;
  }
};

struct DecoderOutput {
  nn::Var trajectories;  // [M × T_f·3], meters / radians
  nn::Var scores;        // [M × 1] logits
  std::vector<nn::Var> router_probs;
  std::vector<RoutingDecision> decisions;
};

/// Centerline-initialized queries, the decoder stack, and the per-mode heads.
class TrajectoryDecoder {
 public:
  TrajectoryDecoder() = default;
  TrajectoryDecoder(nn::ParameterStore& store, nn::Initializer& init, const ModelConfig& c) : cfg_(c) {
    centerline_embed_ = nn::Linear(store, init, "dec.centerline_embed", kCenterlineFeatures, c.d_model);
    mode_embed_ = &store.add("dec.mode_embed", init.uniform({c.modes, c.d_model}, 1));
    for (std::size_t l = 0; l < c.decoder_layers; ++l)
      layers_.emplace_back(store, init, "dec.layer" + std::to_string(l), c, c.moe() && l > 0);
    final_norm_ = nn::LayerNorm(store, "dec.final_ln", c.d_model);
    traj_head_ = nn::Mlp2(store, init, "dec.traj_head", c.d_model, c.d_model, c.future_steps * 3);
    score_head_ = nn::Mlp2(store, init, "dec.score_head", c.d_model, c.d_model, 1);
  }

  /// M queries: centerline encodings assigned round-robin, plus a per-mode embedding.
  nn::Var init_queries(nn::Tape& t, const SceneInputs& in) const {
    const std::size_t nk = in.num_centerlines();
    if (nk == 0) throw ConfigError("at least one centerline is required");
    std::vector<nn::RowSegment> segs;
    for (std::size_t k = 0; k < nk; ++k)
      segs.push_back({in.centerline_offsets[k], in.centerline_offsets[k + 1] - in.centerline_offsets[k]});
    nn::Var enc = nn::segment_max(centerline_embed_(t, t.constant(in.centerline_points)), segs);
    nn::Tensor assign({cfg_.modes, nk});
    for (std::size_t m = 0; m < cfg_.modes; ++m) assign.at(m, m % nk) = 1.0;
    return nn::add(nn::matmul(t.constant(assign), enc), t.param(*mode_embed_));
  }

  DecoderOutput decode(nn::Tape& t, const SceneInputs& in, const SceneFeatures& f) const {
    DecoderOutput out;
    nn::Var q = init_queries(t, in);
    for (const auto& layer : layers_) {
      auto r = layer(t, q, f);
      q = r.queries;
      if (layer.moe) {
        out.router_probs.push_back(r.probs);
        out.decisions.push_back(std::move(r.decision));
      }
    }
    nn::Var h = final_norm_(t, q);
    static constexpr double kTrajScale[3] = {kPositionScale, kPositionScale, 1.0};
    nn::Tensor scale({cfg_.modes, cfg_.future_steps * 3});
    for (std::size_t i = 0; i < scale.size(); ++i) scale[i] = kTrajScale[i % 3];
    out.trajectories = nn::add(nn::mul(traj_head_(t, h), t.constant(std::move(scale))), t.constant(kinematic_prior(in)));
    out.scores = score_head_(t, h);
    return out;
  }

  const std::vector<DecoderLayer>& layers() const { return layers_; }

  /// Constant-velocity rollout of the AV's current state, repeated for every
  /// mode; the trajectory head predicts the residual on top of it.
  nn::Tensor kinematic_prior(const SceneInputs& in) const {
    const std::size_t tf = cfg_.future_steps;
    const double x = in.av[0] * kPositionScale, y = in.av[1] * kPositionScale;
    const double heading = std::atan2(in.av[3], in.av[2]);
    const double vx = in.av[4] * kVelocityScale, vy = in.av[5] * kVelocityScale;
    nn::Tensor prior({cfg_.modes, tf * 3});
    for (std::size_t m = 0; m < cfg_.modes; ++m)
      for (std::size_t k = 0; k < tf; ++k) {
        const double dt = kDt * static_cast<double>(k + 1);
        prior.at(m, 3 * k) = x + vx * dt;
        prior.at(m, 3 * k + 1) = y + vy * dt;
        prior.at(m, 3 * k + 2) = heading;
      }
    return prior;
  }

 private:
  ModelConfig cfg_;
  nn::Linear centerline_embed_;
  nn::Parameter* mode_embed_ = nullptr;
  std::vector<DecoderLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Mlp2 traj_head_, score_head_;
};

}  // namespace carplan
