#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "carplan/numerics/tape.hpp"

namespace carplan::nn {

// Raw kernels on Tensor values. All 2-D, row-major.
namespace kernel {

inline void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_str(t.shape()));
}

/// C = A·B
inline Tensor mm(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor c({m, n});
  const double* pa = a.raw().data();
  const double* pb = b.raw().data();
  double* pc = c.raw().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  return c;
}

/// C = A·Bᵀ
inline Tensor mm_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) throw ShapeError("matmul_nt: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.raw()[i * k + p] * b.raw()[j * k + p];
      c.raw()[i * n + j] = s;
    }
  return c;
}

/// C = Aᵀ·B
inline Tensor mm_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.shape()[0], m = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) throw ShapeError("matmul_tn: inner extents differ");
  Tensor c({m, n});
  double* pc = c.raw().data();
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a.raw()[p * m + i];
      if (av == 0.0) continue;
      const double* brow = b.raw().data() + p * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  return c;
}

inline void add_into(Tensor& dst, const Tensor& src, double scale = 1.0) {
  require_same_shape(dst, src, "add_into");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace kernel

inline Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  return t.record(kernel::mm(a.value(), b.value()), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (a.requires_grad()) kernel::add_into(tp.grad_accum(a.id()), kernel::mm_nt(g, b.value()));
    if (b.requires_grad()) kernel::add_into(tp.grad_accum(b.id()), kernel::mm_tn(a.value(), g));
  });
}

/// a·bᵀ
inline Var matmul_nt(Var a, Var b) {
  Tape& t = a.tape();
  return t.record(kernel::mm_nt(a.value(), b.value()), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (a.requires_grad()) kernel::add_into(tp.grad_accum(a.id()), kernel::mm(g, b.value()));
    if (b.requires_grad()) kernel::add_into(tp.grad_accum(b.id()), kernel::mm_tn(g, a.value()));
  });
}

inline Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  kernel::add_into(out, b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (a.requires_grad()) kernel::add_into(tp.grad_accum(a.id()), g);
    if (b.requires_grad()) kernel::add_into(tp.grad_accum(b.id()), g);
  });
}

inline Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  kernel::add_into(out, b.value(), -1.0);
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (a.requires_grad()) kernel::add_into(tp.grad_accum(a.id()), g);
    if (b.requires_grad()) kernel::add_into(tp.grad_accum(b.id()), g, -1.0);
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (a.requires_grad()) {
      Tensor& ga = tp.grad_accum(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = tp.grad_accum(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

/// x[m×n] + bias broadcast over rows; bias holds n elements.
inline Var add_row(Var x, Var bias) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  if (bias.value().size() != n) throw ShapeError("add_row: bias length does not match columns");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % n];
  return x.tape().record(std::move(out), {x, bias}, [x, bias, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (x.requires_grad()) kernel::add_into(tp.grad_accum(x.id()), g);
    if (bias.requires_grad()) {
      Tensor& gb = tp.grad_accum(bias.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

inline Var scale(Var x, double c) {
  Tensor out = x.value();
  for (auto& v : out.raw()) v *= c;
  return x.tape().record(std::move(out), {x}, [x, c](Tape& tp, std::size_t self) {
    kernel::add_into(tp.grad_accum(x.id()), tp.grad(self), c);
  });
}

/// x scaled by a one-element Var.
inline Var mul_scalar(Var x, Var s) {
  if (s.value().size() != 1) throw ShapeError("mul_scalar: scale must hold one element");
  const double c = s.value()[0];
  Tensor out = x.value();
  for (auto& v : out.raw()) v *= c;
  return x.tape().record(std::move(out), {x, s}, [x, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (x.requires_grad()) kernel::add_into(tp.grad_accum(x.id()), g, s.value()[0]);
    if (s.requires_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.value()[i];
      tp.grad_accum(s.id())[0] += acc;
    }
  });
}

inline Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.raw()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_accum(x.id());
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.value()[i] > 0.0) gx[i] += g[i];
  });
}

namespace kernel {

/// Row softmax; columns with key_valid[c] == 0 get probability exactly 0.
inline Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> key_valid = {}) {
  const std::size_t r = x.rows(), c = x.cols();
  if (!key_valid.empty() && key_valid.size() != c) throw ShapeError("softmax: mask length does not match columns");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (key_valid.empty() || key_valid[j]) mx = std::max(mx, x[i * c + j]);
    if (!std::isfinite(mx)) continue;  // fully masked row stays zero
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = (key_valid.empty() || key_valid[j]) ? std::exp(x[i * c + j] - mx) : 0.0;
      out[i * c + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
  }
  return out;
}

}  // namespace kernel

/// Softmax along the last axis. Masked columns act as an additive -inf.
inline Var softmax_rows(Var x, std::vector<std::uint8_t> key_valid = {}) {
  Tensor out = kernel::softmax_rows(x.value(), key_valid);
  const std::size_t r = x.value().rows(), c = x.value().cols();
  return x.tape().record(std::move(out), {x}, [x, r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& p = tp.value(self);
    Tensor& gx = tp.grad_accum(x.id());
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * p[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += p[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

/// Per-row normalization to zero mean / unit variance, then gain·x̂ + bias.
inline Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (gain.value().size() != c || bias.value().size() != c) throw ShapeError("layer_norm: affine size mismatch");
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv[i * c + j] - mean) * (xv[i * c + j] - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) xhat[i * c + j] = (xv[i * c + j] - mean) * inv_std[i];
  }
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = gain.value()[j] * xhat[i * c + j] + bias.value()[j];
  return x.tape().record(std::move(out), {x, gain, bias},
                         [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (gain.requires_grad()) {
      Tensor& gg = tp.grad_accum(gain.id());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xhat[i * c + j];
    }
    if (bias.requires_grad()) {
      Tensor& gb = tp.grad_accum(bias.id());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
    }
    if (x.requires_grad()) {
      Tensor& gx = tp.grad_accum(x.id());
      const double inv_c = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < r; ++i) {
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double d = g[i * c + j] * gain.value()[j];
          sum_d += d;
          sum_dx += d * xhat[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) {
          const double d = g[i * c + j] * gain.value()[j];
          gx[i * c + j] += inv_std[i] * (d - inv_c * sum_d - xhat[i * c + j] * inv_c * sum_dx);
        }
      }
    }
  });
}

/// Stacks matrices with equal column counts.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts.front().value().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != c) throw ShapeError("concat_rows: column mismatch");
    r += p.value().rows();
  }
  Tensor out({r, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().raw().begin(), p.value().raw().end(), out.raw().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t o = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.value().size();
      if (p.requires_grad()) {
        Tensor& gp = tp.grad_accum(p.id());
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[o + i];
      }
      o += n;
    }
  });
}

/// Joins matrices with equal row counts side by side.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts.front().value().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != r) throw ShapeError("concat_cols: row mismatch");
    c += p.value().cols();
  }
  Tensor out({r, c});
  std::size_t coff = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.value().cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * c + coff + j] = p.value()[i * pc + j];
    coff += pc;
  }
  return parts.front().tape().record(std::move(out), parts, [parts, r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t co = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.value().cols();
      if (p.requires_grad()) {
        Tensor& gp = tp.grad_accum(p.id());
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += g[i * c + co + j];
      }
      co += pc;
    }
  });
}

inline Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const std::size_t c = x.value().cols();
  if (begin + count > x.value().rows()) throw ShapeError("slice_rows: range out of bounds");
  Tensor out({count, c});
  std::copy_n(x.value().raw().begin() + static_cast<std::ptrdiff_t>(begin * c), count * c, out.raw().begin());
  return x.tape().record(std::move(out), {x}, [x, begin, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_accum(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * c + i] += g[i];
  });
}

inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const std::size_t r = x.value().rows(), c = x.value().cols();
  if (begin + count > c) throw ShapeError("slice_cols: range out of bounds");
  Tensor out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.value()[i * c + begin + j];
  return x.tape().record(std::move(out), {x}, [x, begin, r, c, count](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_accum(x.id());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) gx[i * c + begin + j] += g[i * count + j];
  });
}

inline Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_accum(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// One contiguous group of rows for segment_max.
struct RowSegment {
  std::size_t begin = 0;
  std::size_t count = 0;
};

/// Column-wise max over the valid rows of each segment -> [segments × cols].
/// Ties resolve to the first row; segments with no valid row yield zeros.
inline Var segment_max(Var x, const std::vector<RowSegment>& segments, std::vector<std::uint8_t> row_valid = {}) {
  const std::size_t c = x.value().cols();
  const std::size_t s = segments.size();
  if (!row_valid.empty() && row_valid.size() != x.value().rows()) throw ShapeError("segment_max: mask length mismatch");
  Tensor out({s, c});
  std::vector<std::ptrdiff_t> argmax(s * c, -1);
  for (std::size_t k = 0; k < s; ++k) {
    const auto& seg = segments[k];
    if (seg.begin + seg.count > x.value().rows()) throw ShapeError("segment_max: segment out of bounds");
    for (std::size_t j = 0; j < c; ++j) {
      double best = 0.0;
      std::ptrdiff_t arg = -1;
      for (std::size_t i = seg.begin; i < seg.begin + seg.count; ++i) {
        if (!row_valid.empty() && !row_valid[i]) continue;
        const double v = x.value()[i * c + j];
        if (arg < 0 || v > best) {
          best = v;
          arg = static_cast<std::ptrdiff_t>(i);
        }
      }
      out[k * c + j] = arg < 0 ? 0.0 : best;
      argmax[k * c + j] = arg;
    }
  }
  return x.tape().record(std::move(out), {x}, [x, argmax = std::move(argmax), c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_accum(x.id());
    for (std::size_t k = 0; k < argmax.size(); ++k)
      if (argmax[k] >= 0) gx[static_cast<std::size_t>(argmax[k]) * c + k % c] += g[k];
  });
}

/// Single element at a flat index, as a one-element Var.
inline Var pick(Var x, std::size_t index) {
  if (index >= x.value().size()) throw ShapeError("pick: index out of range");
  return x.tape().record(Tensor::scalar(x.value()[index]), {x}, [x, index](Tape& tp, std::size_t self) {
    tp.grad_accum(x.id())[index] += tp.grad(self)[0];
  });
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().raw()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (auto& v : tp.grad_accum(x.id()).raw()) v += g;
  });
}

inline Var mean(Var x) {
  if (x.value().empty()) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

/// Column means -> [1 × cols].
inline Var mean_rows(Var x) {
  const std::size_t r = x.value().rows(), c = x.value().cols();
  Tensor out({1, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x.value()[i * c + j];
  for (auto& v : out.raw()) v /= static_cast<double>(r);
  return x.tape().record(std::move(out), {x}, [x, r, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad_accum(x.id());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j] / static_cast<double>(r);
  });
}

/// Σ x ⊙ w for a constant weight tensor.
inline Var dot_const(Var x, const Tensor& w) {
  require_same_shape(x.value(), w, "dot_const");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  return x.tape().record(Tensor::scalar(s), {x}, [x, w](Tape& tp, std::size_t self) {
    kernel::add_into(tp.grad_accum(x.id()), w, tp.grad(self)[0]);
  });
}

inline Var add_scalars(const std::vector<Var>& terms) {
  if (terms.empty()) throw ShapeError("add_scalars: no terms");
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

namespace kernel {

inline double smooth_l1_elem(double d, double beta) {
  const double a = std::abs(d);
  return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
}

inline double smooth_l1_grad(double d, double beta) {
  const double a = std::abs(d);
  if (a < beta) return d / beta;
  return d > 0.0 ? 1.0 : -1.0;
}

}  // namespace kernel

/// Weighted mean of the elementwise smooth-L1 penalty: Σ wᵢ·ℓ(dᵢ) / Σ wᵢ.
/// An empty `weights` means all ones. A zero total weight yields a constant 0.
inline Var smooth_l1(Var pred, const Tensor& target, double beta = 1.0, const Tensor& weights = {}) {
  if (pred.value().size() != target.size())
    throw ShapeError("smooth_l1: shape mismatch " + shape_str(pred.value().shape()) + " vs " + shape_str(target.shape()));
  if (!weights.empty() && weights.size() != target.size()) throw ShapeError("smooth_l1: weight shape mismatch");
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  double total_w = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    total_w += w;
    if (w != 0.0) acc += w * kernel::smooth_l1_elem(pred.value()[i] - target[i], beta);
  }
  if (total_w == 0.0) return pred.tape().constant(Tensor::scalar(0.0));
  return pred.tape().record(Tensor::scalar(acc / total_w), {pred}, [pred, target, weights, beta, total_w](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0] / total_w;
    Tensor& gp = tp.grad_accum(pred.id());
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double w = weights.empty() ? 1.0 : weights[i];
      if (w != 0.0) gp[i] += g * w * kernel::smooth_l1_grad(pred.value()[i] - target[i], beta);
    }
  });
}

/// -log softmax(logits)[target] over all elements of `logits`.
inline Var cross_entropy(Var logits, std::size_t target) {
  const Tensor& z = logits.value();
  if (target >= z.size()) throw std::out_of_range("cross_entropy: target index out of range");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < z.size(); ++i)
    if (z[i] > z[arg]) arg = i;
  const double mx = z[arg];
  // log-sum-exp as mx + log1p(Σ_{i≠arg} e^{zᵢ-mx}) keeps tiny losses accurate.
  double rest = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (i != arg) rest += std::exp(z[i] - mx);
  const double sum = 1.0 + rest;
  const double loss = (mx - z[target]) + std::log1p(rest);
  return logits.tape().record(Tensor::scalar(loss), {logits}, [logits, target, mx, sum](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    Tensor& gz = tp.grad_accum(logits.id());
    for (std::size_t i = 0; i < gz.size(); ++i) {
      const double p = std::exp(logits.value()[i] - mx) / sum;
      gz[i] += g * (p - (i == target ? 1.0 : 0.0));
    }
  });
}

}  // namespace carplan::nn
