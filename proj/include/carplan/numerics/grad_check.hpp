#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "carplan/numerics/layers.hpp"

namespace carplan::nn {

using LossFn = std::function<Var(Tape&)>;

struct GradCheckBlock {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckBlock> blocks;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double relative_error(double ad, double fd, double floor = 1e-8) {
  return std::abs(ad - fd) / std::max(floor, std::abs(ad) + std::abs(fd));
}

namespace detail {
inline double eval_loss(const LossFn& loss_fn) {
  Tape tape(false);
  const double v = loss_fn(tape).value().item();
  if (!std::isfinite(v)) throw NonFiniteLoss("grad_check: loss is not finite");
  return v;
}
}  // namespace detail

/// Compares tape gradients with central finite differences, element by element.
///
/// `tamper` may alter the tape gradients before comparison; it exists so
/// callers can build negative controls. `floor` bounds the denominator of
/// the relative error from below.
inline GradCheckReport grad_check_report(const LossFn& loss_fn, const std::vector<Parameter*>& params,
                                         double epsilon = 1e-5,
                                         const std::function<void(std::vector<Tensor>&)>& tamper = {},
                                         double floor = 1e-8) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    if (!std::isfinite(loss.value().item())) throw NonFiniteLoss("grad_check: loss is not finite");
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);
  if (tamper) tamper(analytic);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    GradCheckBlock block{p.name, p.value.size()};
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + epsilon;
      const double up = detail::eval_loss(loss_fn);
      p.value[i] = orig - epsilon;
      const double down = detail::eval_loss(loss_fn);
      p.value[i] = orig;
      const double fd = (up - down) / (2.0 * epsilon);
      const double e = relative_error(analytic[k][i], fd, floor);
      if (e > block.max_rel_error) {
        block.max_rel_error = e;
        block.worst_index = i;
        block.worst_analytic = analytic[k][i];
        block.worst_numeric = fd;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(std::move(block));
  }
  return report;
}

/// max over all parameter elements of |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
inline double grad_check(const LossFn& loss_fn, const std::vector<Parameter*>& params, double epsilon = 1e-5) {
  return grad_check_report(loss_fn, params, epsilon).max_rel_error;
}

}  // namespace carplan::nn
