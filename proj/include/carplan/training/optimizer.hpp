#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "carplan/numerics/layers.hpp"

namespace carplan {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // ≤ 0 disables clipping
  bool cosine = false;
  std::size_t total_steps = 0;  // cosine period
  double min_lr_fraction = 0.0;
  std::size_t warmup_steps = 0;  // linear ramp before the schedule
};

/// Global L2 norm over all parameter gradients.
inline double gradient_norm(const std::vector<nn::Parameter*>& params) {
  double s = 0.0;
  for (const auto* p : params)
    for (double g : p->grad.raw()) s += g * g;
  return std::sqrt(s);
}

class Adam {
 public:
  Adam(std::vector<nn::Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(nn::Tensor::zeros(p->value.shape()));
      v_.push_back(nn::Tensor::zeros(p->value.shape()));
    }
  }

  double learning_rate() const {
    if (step_ < cfg_.warmup_steps)
      return cfg_.lr * static_cast<double>(step_ + 1) / static_cast<double>(cfg_.warmup_steps + 1);
    if (!cfg_.cosine || cfg_.total_steps == 0) return cfg_.lr;
    const double u = std::min(1.0, static_cast<double>(step_) / static_cast<double>(cfg_.total_steps));
    const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * u));
    return cfg_.lr * (cfg_.min_lr_fraction + (1.0 - cfg_.min_lr_fraction) * c);
  }

  /// Clips, applies one update, and returns the pre-clip gradient norm.
  double step() {
    const double norm = gradient_norm(params_);
    const double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
    const double lr = learning_rate();
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& w = params_[k]->value.raw();
      const auto& g = params_[k]->grad.raw();
      auto& m = m_[k].raw();
      auto& v = v_[k].raw();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] * clip;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    }
    return norm;
  }

  std::size_t steps_taken() const { return step_; }

 private:
  std::vector<nn::Parameter*> params_;
  AdamConfig cfg_;
  std::vector<nn::Tensor> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace carplan
