#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "carplan/model/planner.hpp"

namespace carplan::oracle {

inline std::vector<std::size_t> sort_oracle(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  idx.resize(k);
  return idx;
}

/// Plain loops over stored parameter values: relu(x·W1 + b1)·W2 + b2.
inline std::vector<double> mlp_oracle(const nn::Mlp2& m, const std::vector<double>& x) {
  auto layer = [](const nn::Linear& l, const std::vector<double>& in) {
    std::vector<double> out(l.out);
    for (std::size_t j = 0; j < l.out; ++j) {
      double s = l.bias ? l.bias->value[j] : 0.0;
      for (std::size_t i = 0; i < l.in; ++i) s += in[i] * l.weight->value[i * l.out + j];
      out[j] = s;
    }
    return out;
  };
  std::vector<double> h = layer(m.first, x);
  for (double& v : h) v = std::max(v, 0.0);
  return layer(m.second, h);
}

struct MixFixture {
  ModelConfig cfg;
  nn::ParameterStore store;
  ExpertBank bank;
  nn::Tensor q, probs;

  MixFixture(std::uint64_t seed, std::size_t rows, std::size_t experts, std::size_t shared) {
    cfg = ModelConfig::tiny();
    cfg.experts = experts;
    cfg.shared_experts = shared;
    nn::Initializer init(seed);
    bank = ExpertBank(store, init, "bank", cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.5);
    q = nn::Tensor({rows, cfg.d_model});
    for (double& v : q.raw()) v = n(rng);
    probs = nn::Tensor({rows, experts});
    for (std::size_t r = 0; r < rows; ++r) {
      double z = 0.0;
      for (std::size_t i = 0; i < experts; ++i) z += probs.at(r, i) = std::exp(n(rng));
      for (std::size_t i = 0; i < experts; ++i) probs.at(r, i) /= z;
    }
  }

  nn::Tensor mix(const RoutingDecision& d) const {
    nn::Tape t(false);
    return expert_mix(t, t.constant(q), t.constant(probs), d, bank).value();
  }

  /// Every routed expert evaluated on every row, then masked to the top K.
  nn::Tensor dense(std::size_t k) const {
    const std::size_t m = q.rows(), dm = q.cols(), n = probs.cols();
    nn::Tensor out({m, dm});
    for (std::size_t r = 0; r < m; ++r) {
      std::vector<double> x(q.raw().begin() + static_cast<std::ptrdiff_t>(r * dm),
                            q.raw().begin() + static_cast<std::ptrdiff_t>((r + 1) * dm));
      std::vector<double> p(probs.raw().begin() + static_cast<std::ptrdiff_t>(r * n),
                            probs.raw().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
      const auto top = sort_oracle(p, k);
      for (std::size_t i = 0; i < n; ++i) {
        const double gate = std::find(top.begin(), top.end(), i) != top.end() ? p[i] : 0.0;
        const auto y = mlp_oracle(bank.routed[i], x);
        for (std::size_t c = 0; c < dm; ++c) out.at(r, c) += gate * y[c];
      }
      for (const auto& s : bank.shared) {
        const auto y = mlp_oracle(s, x);
        for (std::size_t c = 0; c < dm; ++c) out.at(r, c) += y[c];
      }
    }
    return out;
  }
};

inline double largest_gap(const nn::Tensor& a, const nn::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Brute-force restatement of the displacement definition.
inline Vec2 displacement_target(const Scenario& s, std::size_t element, std::size_t t) {
  const std::size_t now = static_cast<std::size_t>(s.current_index());
  const Vec2 av = s.av.states[now + 1 + t].position;
  if (element < s.agents.size()) {
    const AgentTrack& a = s.agents[element];
    std::size_t k = now + 1 + t;
    while (!a.valid[k]) --k;
    return a.states[k].position - av;
  }
  const auto& pts = s.map[element - s.agents.size()].points;
  const Vec2 origin = s.av.states[now].position;
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if ((pts[i] - origin).norm() < (pts[best] - origin).norm()) best = i;
  return pts[best] - av;
}

}  // namespace carplan::oracle
