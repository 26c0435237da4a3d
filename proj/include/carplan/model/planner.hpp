#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "carplan/model/config.hpp"
#include "carplan/model/decoder.hpp"
#include "carplan/model/encoder.hpp"
#include "carplan/model/features.hpp"
#include "carplan/numerics/checkpoint.hpp"

namespace carplan {

/// Planner result in the frame of the input scenario.
struct PlanOutput {
  nn::Tensor trajectories;  // [M × T_f × 3]
  nn::Tensor scores;        // [M] logits
  std::vector<RoutingDecision> routing;

  std::size_t modes() const { return scores.size(); }
  std::size_t best_mode() const {
    std::size_t b = 0;
    for (std::size_t m = 1; m < scores.size(); ++m)
      if (scores[m] > scores[b]) b = m;
    return b;
  }
};

/// Everything one forward pass produced, still attached to the tape.
struct ForwardResult {
  SceneFeatures scene;
  DecoderOutput decoder;
  nn::Var displacements;  // valid only when requested
  bool has_displacements = false;
};

/// Per-layer expert selection counts; the routing telemetry record.
struct ExpertUsage {
  std::size_t experts = 0;
  std::vector<std::vector<std::size_t>> counts;  // [layer][expert]

  void add(const std::vector<RoutingDecision>& decisions) {
    if (decisions.empty()) return;
    if (counts.empty()) {
      experts = decisions.front().experts();
      counts.assign(decisions.size(), std::vector<std::size_t>(experts, 0));
    }
    for (std::size_t l = 0; l < decisions.size(); ++l)
      for (const auto& sel : decisions[l].selected)
        for (auto i : sel) counts[l][i]++;
  }

  void merge(const ExpertUsage& o) {
    if (o.counts.empty()) return;
    if (counts.empty()) {
      *this = o;
      return;
    }
    if (o.counts.size() != counts.size() || o.experts != experts) throw std::invalid_argument("expert usage shape mismatch");
    for (std::size_t l = 0; l < counts.size(); ++l)
      for (std::size_t e = 0; e < experts; ++e) counts[l][e] += o.counts[l][e];
  }

  /// Coefficient of variation (std / mean) of counts pooled over layers.
  double coefficient_of_variation() const {
    std::vector<double> v;
    for (const auto& layer : counts)
      for (auto c : layer) v.push_back(static_cast<double>(c));
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (mean == 0.0) return 0.0;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return std::sqrt(var) / mean;
  }

  nlohmann::json to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < counts.size(); ++l)
      layers.push_back({{"layer", l + 1}, {"counts", counts[l]}});
    return {{"experts", experts}, {"layers", layers}};
  }
};

class Planner {
 public:
  explicit Planner(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    nn::Initializer init(cfg_.seed);
    encoder_ = SceneEncoder(store_, init, cfg_);
    decoder_ = TrajectoryDecoder(store_, init, cfg_);
  }
  Planner(const Planner&) = delete;
  Planner& operator=(const Planner&) = delete;
  Planner(Planner&&) = default;
  Planner& operator=(Planner&&) = default;

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const SceneEncoder& encoder() const { return encoder_; }
  const TrajectoryDecoder& decoder() const { return decoder_; }

  SceneInputs inputs(const Scenario& s) const { return build_inputs(s, cfg_.history_steps); }

  /// Encoder then decoder. The displacement head reads the scene features
  /// but nothing downstream reads the displacement head.
  ForwardResult forward(nn::Tape& t, const SceneInputs& in, bool with_displacements) const {
    ForwardResult r;
    r.scene = encoder_.encode(t, in);
    if (with_displacements) {
      r.displacements = encoder_.predict_displacements(t, in, r.scene);
      r.has_displacements = true;
    }
    r.decoder = decoder_.decode(t, in, r.scene);
    return r;
  }

  PlanOutput plan(const SceneInputs& in, bool evaluate_displacements = false) const {
    nn::Tape t(false);
    ForwardResult r = forward(t, in, evaluate_displacements && encoder_.has_disp_head());
    return to_plan(r);
  }
  PlanOutput plan(const Scenario& s) const { return plan(inputs(s)); }

  PlanOutput to_plan(const ForwardResult& r) const {
    PlanOutput p;
    p.trajectories = r.decoder.trajectories.value().reshaped({cfg_.modes, cfg_.future_steps, 3});
    p.scores = r.decoder.scores.value().reshaped({cfg_.modes});
    p.routing = r.decoder.decisions;
    return p;
  }

  std::string checkpoint_bytes() const { return nn::encode_checkpoint(nn::snapshot(store_, cfg_.serialize())); }
  void save(const std::string& path) const { nn::write_file(path, checkpoint_bytes()); }

  /// Rebuilds a planner from checkpoint bytes. Displacement-head arrays may be
  /// absent: inference never reads them.
  static Planner from_checkpoint(const std::string& bytes) {
    const nn::Checkpoint ck = nn::decode_checkpoint(bytes);
    Planner p(ModelConfig::parse(ck.metadata));
    nn::restore(p.store_, ck, [](const std::string& name) { return name.rfind("disp_head.", 0) == 0; });
    return p;
  }
  static Planner load(const std::string& path) { return from_checkpoint(nn::read_file(path)); }

 private:
  ModelConfig cfg_;
  nn::ParameterStore store_;
  SceneEncoder encoder_;
  TrajectoryDecoder decoder_;
};

}  // namespace carplan
