#include "forest/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "kernels.hpp"

namespace forest::num {

namespace {

using Strides = std::vector<std::size_t>;

Strides contiguous_strides(const Shape& s) {
  Strides st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Strides of `s` aligned to an output of rank `rank`; broadcast axes get stride 0.
Strides aligned_strides(const Shape& s, std::size_t rank, std::size_t unit = 1) {
  Strides st(rank, 0);
  Strides own = contiguous_strides(s);
  const std::size_t lead = rank - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    st[lead + i] = s[i] == 1 ? 0 : own[i] * unit;
  }
  return st;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out` in row-major order.
template <typename F>
void for_each_broadcast(const Shape& out, const Strides& sa, const Strides& sb, F&& f) {
  const std::size_t rank = out.size();
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t total = shape_numel(out);
  const std::size_t inner = out[rank - 1];
  const std::size_t ia = sa[rank - 1];
  const std::size_t ib = sb[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ao = 0;
  std::size_t bo = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ao + j * ia, bo + j * ib);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      ao += sa[ax];
      bo += sb[ax];
      if (idx[ax] < out[ax]) break;
      ao -= sa[ax] * out[ax];
      bo -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

void require_rank_at_least(const Var& a, std::size_t r, const char* op) {
  if (a.shape().size() < r) {
    throw DimensionError(std::string(op) + ": operand of shape " + shape_string(a.shape()) +
                         " needs rank >= " + std::to_string(r));
  }
}

enum class BinaryKind { Add, Sub, Mul };

Var binary(const Var& a, const Var& b, BinaryKind kind, const char* name) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const double* av = a.value().data();
  const double* bv = b.value().data();

  if (as == bs) {
    Tensor out(as);
    double* o = out.data();
    const std::size_t n = out.numel();
    switch (kind) {
      case BinaryKind::Add: for (std::size_t i = 0; i < n; ++i) o[i] = av[i] + bv[i]; break;
      case BinaryKind::Sub: for (std::size_t i = 0; i < n; ++i) o[i] = av[i] - bv[i]; break;
      case BinaryKind::Mul: for (std::size_t i = 0; i < n; ++i) o[i] = av[i] * bv[i]; break;
    }
    return make_op(std::move(out), {a, b}, [a, b, kind](Node& self) {
      const double* g = self.grad.data();
      const std::size_t n = self.grad.numel();
      if (a.requires_grad()) {
        double* ga = a.node()->grad_buffer().data();
        if (kind == BinaryKind::Mul) {
          const double* bv = b.value().data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (b.requires_grad()) {
        double* gb = b.node()->grad_buffer().data();
        if (kind == BinaryKind::Mul) {
          const double* av = a.value().data();
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
        } else if (kind == BinaryKind::Sub) {
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
      }
    }, name);
  }

  Shape os = broadcast_shapes(as, bs);
  Strides sa = aligned_strides(as, os.size());
  Strides sb = aligned_strides(bs, os.size());
  Tensor out(os);
  double* o = out.data();
  for_each_broadcast(os, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinaryKind::Add: o[i] = av[ia] + bv[ib]; break;
      case BinaryKind::Sub: o[i] = av[ia] - bv[ib]; break;
      case BinaryKind::Mul: o[i] = av[ia] * bv[ib]; break;
    }
  });
  return make_op(std::move(out), {a, b}, [a, b, kind, os, sa, sb](Node& self) {
    const double* g = self.grad.data();
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ga = a.requires_grad() ? a.node()->grad_buffer().data() : nullptr;
    double* gb = b.requires_grad() ? b.node()->grad_buffer().data() : nullptr;
    for_each_broadcast(os, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (ga) ga[ia] += kind == BinaryKind::Mul ? g[i] * bv[ib] : g[i];
      if (gb) {
        if (kind == BinaryKind::Mul) gb[ib] += g[i] * av[ia];
        else if (kind == BinaryKind::Sub) gb[ib] -= g[i];
        else gb[ib] += g[i];
      }
    });
  }, name);
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("shapes " + shape_string(a) + " and " + shape_string(b) +
                           " are not broadcast-compatible");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Var add(const Var& a, const Var& b) { return binary(a, b, BinaryKind::Add, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinaryKind::Sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinaryKind::Mul, "mul"); }

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return make_op(std::move(out), {a}, [a, factor](Node& self) {
    double* ga = a.node()->grad_buffer().data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) ga[i] += g[i] * factor;
  }, "scale");
}

Var matmul(const Var& a, const Var& b) {
  require_rank_at_least(a, 2, "matmul");
  require_rank_at_least(b, 2, "matmul");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as[as.size() - 1];
  const std::size_t n = bs[bs.size() - 1];
  if (bs[bs.size() - 2] != k) {
    throw DimensionError("matmul: inner extents differ for " + shape_string(as) + " x " +
                         shape_string(bs));
  }
  Shape a_batch(as.begin(), as.end() - 2);
  Shape b_batch(bs.begin(), bs.end() - 2);

  if (b_batch.empty()) {
    const std::size_t rows = shape_numel(a_batch) * m;
    Shape os = a_batch;
    os.push_back(m);
    os.push_back(n);
    Tensor out(os, 0.0);
    kernels::gemm_nn(rows, n, k, a.value().data(), b.value().data(), out.data());
    return make_op(std::move(out), {a, b}, [a, b, rows, n, k](Node& self) {
      const double* g = self.grad.data();
      if (a.requires_grad()) {
        kernels::gemm_nt(rows, k, n, g, b.value().data(), a.node()->grad_buffer().data());
      }
      if (b.requires_grad()) {
        kernels::gemm_tn(k, n, rows, a.value().data(), g, b.node()->grad_buffer().data());
      }
    }, "matmul");
  }

  Shape ob;
  try {
    ob = broadcast_shapes(a_batch, b_batch);
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch extents of " + shape_string(as) + " and " +
                         shape_string(bs) + " are not broadcast-compatible");
  }
  Strides sa = aligned_strides(a_batch, ob.size(), m * k);
  Strides sb = aligned_strides(b_batch, ob.size(), k * n);
  Shape os = ob;
  os.push_back(m);
  os.push_back(n);
  Tensor out(os, 0.0);
  {
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* o = out.data();
    for_each_broadcast(ob, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      kernels::gemm_nn(m, n, k, av + ia, bv + ib, o + i * m * n);
    });
  }
  return make_op(std::move(out), {a, b}, [a, b, ob, sa, sb, m, n, k](Node& self) {
    const double* g = self.grad.data();
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ga = a.requires_grad() ? a.node()->grad_buffer().data() : nullptr;
    double* gb = b.requires_grad() ? b.node()->grad_buffer().data() : nullptr;
    for_each_broadcast(ob, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      const double* gi = g + i * m * n;
      if (ga) kernels::gemm_nt(m, k, n, gi, bv + ib, ga + ia);
      if (gb) kernels::gemm_tn(k, n, m, av + ia, gi, gb + ib);
    });
  }, "matmul");
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  require_rank_at_least(x, 1, "linear");
  if (w.shape().size() != 2) throw DimensionError("linear: weight must be rank 2, got " + shape_string(w.shape()));
  const std::size_t in = x.shape().back();
  const std::size_t out_dim = w.shape()[1];
  if (w.shape()[0] != in) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != out_dim)) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape os = x.shape();
  os.back() = out_dim;
  Tensor out(os, 0.0);
  double* o = out.data();
  if (has_bias) {
    const double* bv = bias.value().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv, bv + out_dim, o + r * out_dim);
  }
  kernels::gemm_nn(rows, out_dim, in, x.value().data(), w.value().data(), o);

  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_op(std::move(out), std::move(inputs), [x, w, bias, has_bias, rows, in, out_dim](Node& self) {
    const double* g = self.grad.data();
    if (x.requires_grad()) kernels::gemm_nt(rows, in, out_dim, g, w.value().data(), x.node()->grad_buffer().data());
    if (w.requires_grad()) kernels::gemm_tn(in, out_dim, rows, x.value().data(), g, w.node()->grad_buffer().data());
    if (has_bias && bias.requires_grad()) {
      double* gb = bias.node()->grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g + r * out_dim;
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += gr[j];
      }
    }
  }, "linear");
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op(std::move(out), {a}, [a](Node& self) {
    double* ga = a.node()->grad_buffer().data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) ga[i] += g[i];
  }, "reshape");
}

Var permute(const Var& a, const std::vector<std::size_t>& axes) {
  const Shape& s = a.shape();
  if (axes.size() != s.size()) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for shape " + shape_string(s));
  }
  std::vector<bool> used(s.size(), false);
  Shape os(s.size());
  Strides own = contiguous_strides(s);
  Strides src(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || used[axes[i]]) throw DimensionError("permute: invalid axis list for " + shape_string(s));
    used[axes[i]] = true;
    os[i] = s[axes[i]];
    src[i] = own[axes[i]];
  }
  Strides zero(s.size(), 0);
  Tensor out(os);
  const double* av = a.value().data();
  double* o = out.data();
  for_each_broadcast(os, src, zero, [&](std::size_t i, std::size_t ia, std::size_t) { o[i] = av[ia]; });
  return make_op(std::move(out), {a}, [a, os, src, zero](Node& self) {
    double* ga = a.node()->grad_buffer().data();
    const double* g = self.grad.data();
    for_each_broadcast(os, src, zero, [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += g[i]; });
  }, "permute");
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  Shape os = first;
  os[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw DimensionError("concat: " + shape_string(s) + " incompatible with " + shape_string(first));
    os[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t tail = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) tail *= first[i];
  const std::size_t row = os[axis] * tail;

  Tensor out(os);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis] * tail;
    const double* src = p.value().data();
    for (std::size_t r = 0; r < outer; ++r) std::copy(src + r * w, src + (r + 1) * w, out.data() + r * row + offset);
    widths.push_back(w);
    offset += w;
  }
  return make_op(std::move(out), parts, [parts, widths, outer, row](Node& self) {
    const double* g = self.grad.data();
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const std::size_t w = widths[pi];
      if (parts[pi].requires_grad()) {
        double* gp = parts[pi].node()->grad_buffer().data();
        for (std::size_t r = 0; r < outer; ++r) {
          const double* gr = g + r * row + offset;
          double* dst = gp + r * w;
          for (std::size_t j = 0; j < w; ++j) dst[j] += gr[j];
        }
      }
      offset += w;
    }
  }, "concat");
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " invalid for " + shape_string(s));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t tail = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) tail *= s[i];
  const std::size_t in_row = s[axis] * tail;
  const std::size_t w = (end - begin) * tail;
  const std::size_t off = begin * tail;
  Shape os = s;
  os[axis] = end - begin;
  Tensor out(os);
  const double* src = a.value().data();
  for (std::size_t r = 0; r < outer; ++r) std::copy(src + r * in_row + off, src + r * in_row + off + w, out.data() + r * w);
  return make_op(std::move(out), {a}, [a, outer, in_row, w, off](Node& self) {
    double* ga = a.node()->grad_buffer().data();
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < outer; ++r) {
      double* dst = ga + r * in_row + off;
      const double* gr = g + r * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += gr[j];
    }
  }, "slice");
}

Var broadcast_to(const Var& a, const Shape& shape) {
  if (broadcast_shapes(a.shape(), shape) != shape) {
    throw DimensionError("broadcast_to: cannot expand " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Strides sa = aligned_strides(a.shape(), shape.size());
  Strides zero(shape.size(), 0);
  Tensor out(shape);
  const double* av = a.value().data();
  double* o = out.data();
  for_each_broadcast(shape, sa, zero, [&](std::size_t i, std::size_t ia, std::size_t) { o[i] = av[ia]; });
  return make_op(std::move(out), {a}, [a, shape, sa, zero](Node& self) {
    double* ga = a.node()->grad_buffer().data();
    const double* g = self.grad.data();
    for_each_broadcast(shape, sa, zero, [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += g[i]; });
  }, "broadcast_to");
}

Var gelu(const Var& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  Tensor out(x.shape());
  const double* xv = x.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
  return make_op(std::move(out), {x}, [x](Node& self) {
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    double* gx = x.node()->grad_buffer().data();
    const double* xv = x.value().data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  }, "gelu");
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_rank_at_least(x, 1, "layer_norm");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match input " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* xv = x.value().data();
  const double* gv = gain.value().data();
  const double* bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_op(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std, rows, d](Node& self) {
    const double* g = self.grad.data();
    const double* gv = gain.value().data();
    const double* h = xhat->data();
    if (gain.requires_grad()) {
      double* gg = gain.node()->grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * h[r * d + j];
    }
    if (bias.requires_grad()) {
      double* gb = bias.node()->grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    }
    if (x.requires_grad()) {
      double* gx = x.node()->grad_buffer().data();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0;
        double mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[r * d + j] * gv[j];
          mean_dh += dh;
          mean_dh_h += dh * h[r * d + j];
        }
        mean_dh *= inv_d;
        mean_dh_h *= inv_d;
        const double is = (*inv_std)[r];
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[r * d + j] * gv[j];
          gx[r * d + j] += is * (dh - mean_dh - h[r * d + j] * mean_dh_h);
        }
      }
    }
  }, "layer_norm");
}

Var masked_softmax(const Var& logits, const Mask& mask) {
  require_rank_at_least(logits, 1, "masked_softmax");
  if (mask.shape != logits.shape()) {
    throw DimensionError("masked_softmax: mask " + shape_string(mask.shape) + " does not match logits " +
                         shape_string(logits.shape()));
  }
  const std::size_t n = logits.shape().back();
  const std::size_t rows = logits.numel() / n;
  Tensor out(logits.shape(), 0.0);
  const double* lv = logits.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* lr = lv + r * n;
    const std::uint8_t* mr = mask.valid.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (mr[j]) {
        mx = std::max(mx, lr[j]);
        any = true;
      }
    }
    if (!any) throw NumericError("masked_softmax: row " + std::to_string(r) + " has no valid position");
    double total = 0.0;
    double* orow = out.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (mr[j]) {
        orow[j] = std::exp(lr[j] - mx);
        total += orow[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= total;
  }
  auto probs = std::make_shared<Tensor>(out);
  return make_op(std::move(out), {logits}, [logits, probs, rows, n](Node& self) {
    double* gl = logits.node()->grad_buffer().data();
    const double* g = self.grad.data();
    const double* p = probs->data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * p[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gl[r * n + j] += p[r * n + j] * (g[r * n + j] - dot);
    }
  }, "masked_softmax");
}

Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_index) {
  if (logits.shape().size() != 2) {
    throw DimensionError("cross_entropy: logits must be [n, K], got " + shape_string(logits.shape()));
  }
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(logits.shape()));
  }
  const double* lv = logits.value().data();
  auto probs = std::make_shared<std::vector<double>>(n * k, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(t) + " outside [0," +
                                  std::to_string(k) + ")");
    }
    const double* row = lv + i * k;
    double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[t];
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - lse);
    ++counted;
  }
  if (counted == 0) throw NumericError("cross_entropy: every target is ignored");
  const double inv = 1.0 / static_cast<double>(counted);
  std::vector<int> tcopy(targets.begin(), targets.end());
  return make_op(Tensor::scalar(total * inv), {logits},
                 [logits, probs, tcopy = std::move(tcopy), ignore_index, n, k, inv](Node& self) {
    const double g = self.grad[0] * inv;
    double* gl = logits.node()->grad_buffer().data();
    for (std::size_t i = 0; i < n; ++i) {
      if (tcopy[i] == ignore_index) continue;
      for (std::size_t j = 0; j < k; ++j) gl[i * k + j] += g * (*probs)[i * k + j];
      gl[i * k + static_cast<std::size_t>(tcopy[i])] -= g;
    }
  }, "cross_entropy");
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op(Tensor::scalar(s), {a}, [a](Node& self) {
    const double g = self.grad[0];
    for (double& v : a.node()->grad_buffer().values()) v += g;
  }, "sum");
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

}  // namespace forest::num
