#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "carplan/numerics/ops.hpp"

namespace carplan::nn {

/// Owns every Parameter of a model. Registration order is stable and defines
/// iteration order for optimizers and checkpoints.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(init);
    p->zero_grad();
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::vector<Parameter*> all() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Parameter*> all() const {
    std::vector<const Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Deterministic uniform(-s, s) initializer, s = 1/sqrt(fan_in).
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, std::size_t fan_in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
    std::uniform_real_distribution<double> dist(-s, s);
    Tensor t(std::move(shape));
    for (auto& v : t.raw()) v = dist(rng_);
    return t;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// y = x·W + b with W [in × out]; `bias` may be disabled.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  std::size_t in = 0, out = 0;

  Linear() = default;
  Linear(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in_dim, std::size_t out_dim,
         bool with_bias = true)
      : in(in_dim), out(out_dim) {
    weight = &store.add(name + ".weight", init.uniform({in_dim, out_dim}, in_dim));
    if (with_bias) bias = &store.add(name + ".bias", init.uniform({out_dim}, in_dim));
  }

  Var operator()(Tape& t, Var x) const {
    if (x.value().cols() != in)
      throw ShapeError("linear " + weight->name + ": expected " + std::to_string(in) + " input columns, got " +
                       std::to_string(x.value().cols()));
    Var y = matmul(x, t.param(*weight));
    return bias ? add_row(y, t.param(*bias)) : y;
  }
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim) {
    gain = &store.add(name + ".gain", Tensor({dim}, 1.0));
    bias = &store.add(name + ".bias", Tensor({dim}, 0.0));
  }

  Var operator()(Tape& t, Var x) const { return layer_norm_rows(x, t.param(*gain), t.param(*bias), eps); }
};

/// linear → ReLU → linear.
struct Mlp2 {
  Linear first;
  Linear second;

  Mlp2() = default;
  Mlp2(ParameterStore& store, Initializer& init, const std::string& name, std::size_t in_dim, std::size_t hidden,
       std::size_t out_dim)
      : first(store, init, name + ".fc1", in_dim, hidden), second(store, init, name + ".fc2", hidden, out_dim) {}

  Var operator()(Tape& t, Var x) const { return second(t, relu(first(t, x))); }
};

/// Multi-head scaled dot-product attention with an output projection.
/// The key projection has no bias: it would shift every score of a query
/// equally and never change the softmax.
struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  std::size_t heads = 1;
  std::size_t dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, Initializer& init, const std::string& name, std::size_t d_model,
                     std::size_t num_heads)
      : heads(num_heads), dim(d_model) {
    if (num_heads == 0 || d_model % num_heads != 0)
      throw std::invalid_argument("attention " + name + ": d_model " + std::to_string(d_model) +
                                  " is not divisible by " + std::to_string(num_heads) + " heads");
    q_proj = Linear(store, init, name + ".q", d_model, d_model);
    k_proj = Linear(store, init, name + ".k", d_model, d_model, false);
    v_proj = Linear(store, init, name + ".v", d_model, d_model);
    out_proj = Linear(store, init, name + ".o", d_model, d_model);
  }

  /// `key_valid[j] == 0` removes key j from every query's softmax.
  /// If `weights_out` is given, it receives one [Lq × Lk] matrix per head.
  Var operator()(Tape& t, Var q, Var k, Var v, const std::vector<std::uint8_t>& key_valid = {},
                 std::vector<Tensor>* weights_out = nullptr) const {
    const std::size_t dh = dim / heads;
    Var qp = q_proj(t, q), kp = k_proj(t, k), vp = v_proj(t, v);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Var qh = heads == 1 ? qp : slice_cols(qp, h * dh, dh);
      Var kh = heads == 1 ? kp : slice_cols(kp, h * dh, dh);
      Var vh = heads == 1 ? vp : slice_cols(vp, h * dh, dh);
      Var w = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), key_valid);
      if (weights_out) weights_out->push_back(w.value());
      head_out.push_back(matmul(w, vh));
    }
    Var joined = heads == 1 ? head_out.front() : concat_cols(head_out);
    return out_proj(t, joined);
  }
};

}  // namespace carplan::nn
