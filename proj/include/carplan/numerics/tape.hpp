#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>

#include "carplan/numerics/tensor.hpp"

namespace carplan::nn {

/// A named trainable array. `grad` accumulates across backward passes until cleared.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor::zeros(value.shape()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode computation record.
///
/// Nodes are appended in evaluation order, so creation order is a topological
/// order. `backward` walks it in reverse; a node's gradient is complete before
/// its backward function runs. Parameter leaves write their gradient into the
/// owning Parameter at the end of the pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false, {}});
    return Var(this, nodes_.size() - 1);
  }

  /// Leaf referring to `p` without copying. Repeated calls return the same node.
  Var param(Parameter& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
    nodes_.push_back(Node{{}, {}, &p.value, grad_enabled_ ? &p : nullptr, grad_enabled_, {}});
    param_ids_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
  }

  /// Appends an op result. `backward` is dropped when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, needs, needs ? std::move(backward) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
  }

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, needs, needs ? std::move(backward) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer; empty tensor if nothing has flowed into the node.
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }

  /// Mutable gradient buffer, zero-allocated on first touch.
  Tensor& grad_accum(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !value(id).empty()) n.grad = Tensor::zeros(value(id).shape());
    return n.grad;
  }

  void backward(Var root) {
    if (root.value().size() != 1) throw ShapeError("backward() needs a scalar root");
    if (!requires_grad(root.id())) return;
    grad_accum(root.id())[0] += 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.owner) {
        if (n.owner->grad.shape() != n.owner->value.shape()) n.owner->zero_grad();
        auto& dst = n.owner->grad.raw();
        const auto& src = n.grad.raw();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    const Tensor* external;
    Parameter* owner;
    bool requires_grad;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
  bool grad_enabled_ = true;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace carplan::nn
