#pragma once

#include <limits>
#include <string>
#include <vector>

#include "carplan/model/config.hpp"
#include "carplan/model/features.hpp"
#include "carplan/numerics/layers.hpp"

namespace carplan {

/// Pre-norm block: x + MHA(LN x), then x + FFN(LN x).
struct EncoderLayer {
  nn::LayerNorm norm_attn, norm_ffn;
  nn::MultiHeadAttention attn;
  nn::Mlp2 ffn;

  EncoderLayer() = default;
  EncoderLayer(nn::ParameterStore& store, nn::Initializer& init, const std::string& name, const ModelConfig& c)
      : norm_attn(store, name + ".ln1", c.d_model),
        norm_ffn(store, name + ".ln2", c.d_model),
        attn(store, init, name + ".attn", c.d_model, c.heads),
        ffn(store, init, name + ".ffn", c.d_model, c.ffn_hidden, c.d_model) {}

  nn::Var operator()(nn::Tape& t, nn::Var x, const std::vector<std::uint8_t>& mask) const {
    nn::Var h = norm_attn(t, x);
    x = nn::add(x, attn(t, h, h, h, mask));
    return nn::add(x, ffn(t, norm_ffn(t, x)));
  }
};

/// Encoded scene: F^D rows are [AV; agents; map], with the token mask.
struct SceneFeatures {
  nn::Var features;
  std::vector<std::uint8_t> mask;
  std::size_t num_agents = 0;
  std::size_t num_map = 0;
};

/// Modality embeddings, the transformer scene encoder, and the displacement head.
class SceneEncoder {
 public:
  SceneEncoder() = default;
  SceneEncoder(nn::ParameterStore& store, nn::Initializer& init, const ModelConfig& c) : cfg_(c) {
    av_embed_ = nn::Linear(store, init, "enc.av_embed", kAvFeatures, c.d_model);
    agent_embed_ = nn::Linear(store, init, "enc.agent_embed", kAgentFeatures, c.d_model);
    map_embed_ = nn::Linear(store, init, "enc.map_embed", kMapFeatures, c.d_model);
    for (std::size_t l = 0; l < c.encoder_layers; ++l)
      layers_.emplace_back(store, init, "enc.layer" + std::to_string(l), c);
    final_norm_ = nn::LayerNorm(store, "enc.final_ln", c.d_model);
    if (c.dpe_enabled())
      disp_head_ = nn::Mlp2(store, init, "disp_head", 2 * c.d_model, 2 * c.d_model, c.future_steps * 2);
  }

  nn::Var embed_av(nn::Tape& t, const SceneInputs& in) const { return av_embed_(t, t.constant(in.av)); }

  /// Per-step linear embedding max-pooled over each agent's valid history steps.
  nn::Var embed_agents(nn::Tape& t, const SceneInputs& in) const {
    std::vector<nn::RowSegment> segs;
    for (std::size_t a = 0; a < in.num_agents(); ++a) segs.push_back({a * in.history_steps, in.history_steps});
    for (std::size_t a = 0; a < in.num_agents(); ++a) {
      if (!in.agent_valid[a]) continue;
      bool any = false;
      for (std::size_t h = 0; h < in.history_steps; ++h) any = any || in.agent_step_valid[a * in.history_steps + h];
      if (!any) throw ScenarioError("agent " + std::to_string(a) + " is marked valid but has no valid history");
    }
    return nn::segment_max(agent_embed_(t, t.constant(in.agent_steps)), segs, in.agent_step_valid);
  }

  /// Per-point linear embedding max-pooled over each polyline.
  nn::Var embed_map(nn::Tape& t, const SceneInputs& in) const {
    std::vector<nn::RowSegment> segs;
    for (std::size_t p = 0; p < in.num_map(); ++p)
      segs.push_back({in.map_offsets[p], in.map_offsets[p + 1] - in.map_offsets[p]});
    return nn::segment_max(map_embed_(t, t.constant(in.map_points)), segs);
  }

  /// Token assembly plus the masked transformer stack. Used for training and inference alike.
  SceneFeatures encode(nn::Tape& t, const SceneInputs& in) const {
    std::vector<nn::Var> parts{embed_av(t, in)};
    if (in.num_agents() > 0) parts.push_back(embed_agents(t, in));
    if (in.num_map() > 0) parts.push_back(embed_map(t, in));
    SceneFeatures f;
    f.num_agents = in.num_agents();
    f.num_map = in.num_map();
    f.mask.push_back(1);
    f.mask.insert(f.mask.end(), in.agent_valid.begin(), in.agent_valid.end());
    f.mask.insert(f.mask.end(), in.map_valid.begin(), in.map_valid.end());
    nn::Var x = parts.size() == 1 ? parts.front() : nn::concat_rows(parts);
    for (const auto& layer : layers_) x = layer(t, x, f.mask);
    f.features = final_norm_(t, x);
    return f;
  }

  bool has_disp_head() const { return disp_head_.first.weight != nullptr; }

  /// [(N_a + N_p) × T_f·2] displacement predictions in meters; row e holds
  /// (dx_1, dy_1, dx_2, ...) for element e. The head predicts the residual
  /// on top of `displacement_prior`.
  nn::Var predict_displacements(nn::Tape& t, const SceneInputs& in, const SceneFeatures& f) const {
    if (!has_disp_head()) throw ConfigError("model has no displacement head");
    const std::size_t n = f.num_agents + f.num_map;
    nn::Var av = nn::slice_rows(f.features, 0, 1);
    nn::Var elems = nn::slice_rows(f.features, 1, n);
    nn::Var av_rows = nn::matmul(t.constant(nn::Tensor({n, 1}, 1.0)), av);
    nn::Var out = disp_head_(t, nn::concat_cols({av_rows, elems}));
    return nn::add(nn::scale(out, kPositionScale), t.constant(displacement_prior(in)));
  }

  /// Constant-velocity guess: agents extrapolate their latest valid state,
  /// map elements sit at their point nearest the AV, and the AV extrapolates
  /// its current velocity. Invalid tokens get zero.
  nn::Tensor displacement_prior(const SceneInputs& in) const {
    const std::size_t tf = cfg_.future_steps, na = in.num_agents(), np = in.num_map();
    nn::Tensor prior({na + np, tf * 2});
    const Vec2 av{in.av[0] * kPositionScale, in.av[1] * kPositionScale};
    const Vec2 av_v{in.av[4] * kVelocityScale, in.av[5] * kVelocityScale};
    auto fill = [&](std::size_t row, Vec2 p, Vec2 v) {
      for (std::size_t k = 0; k < tf; ++k) {
        const double dt = kDt * static_cast<double>(k + 1);
        prior.at(row, 2 * k) = p.x + v.x * dt - (av.x + av_v.x * dt);
        prior.at(row, 2 * k + 1) = p.y + v.y * dt - (av.y + av_v.y * dt);
      }
    };
    const std::size_t th = in.history_steps;
    for (std::size_t a = 0; a < na; ++a) {
      if (!in.agent_valid[a]) continue;
      for (std::size_t h = th; h-- > 0;) {
        if (!in.agent_step_valid[a * th + h]) continue;
        const std::size_t r = a * th + h;
        fill(a, {in.agent_steps.at(r, 0) * kPositionScale, in.agent_steps.at(r, 1) * kPositionScale},
             {in.agent_steps.at(r, 4) * kVelocityScale, in.agent_steps.at(r, 5) * kVelocityScale});
        break;
      }
    }
    for (std::size_t p = 0; p < np; ++p) {
      if (!in.map_valid[p]) continue;
      Vec2 best{0.0, 0.0};
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = in.map_offsets[p]; i < in.map_offsets[p + 1]; ++i) {
        const Vec2 q{in.map_points.at(i, 0) * kPositionScale, in.map_points.at(i, 1) * kPositionScale};
        const double d = (q - av).norm();
        if (d < best_d) {
          best_d = d;
          best = q;
        }
      }
      fill(na + p, best, {0.0, 0.0});
    }
    return prior;
  }

 private:
  ModelConfig cfg_;
  nn::Linear av_embed_, agent_embed_, map_embed_;
  std::vector<EncoderLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Mlp2 disp_head_;
};

}  // namespace carplan
