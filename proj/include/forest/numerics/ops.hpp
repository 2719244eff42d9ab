#pragma once

#include <span>
#include <vector>

#include "forest/numerics/autograd.hpp"

namespace forest::num {

// Elementwise arithmetic with numpy-style broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

/// Batched matrix product a[..., m, k] x b[..., k, n] -> [..., m, n].
/// Leading extents broadcast; a rank-2 `b` is shared across the batch.
Var matmul(const Var& a, const Var& b);

/// x[..., in] * w[in, out] + bias[out]. `bias` may be undefined.
Var linear(const Var& x, const Var& w, const Var& bias);

Var reshape(const Var& a, Shape shape);
/// Output axis i is input axis `axes[i]`.
Var permute(const Var& a, const std::vector<std::size_t>& axes);
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
Var broadcast_to(const Var& a, const Shape& shape);

/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
Var gelu(const Var& x);

/// Normalizes over the last axis, then applies gain and bias of that extent.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Softmax over the last axis restricted to valid positions; masked positions are exactly 0.
/// `mask` has the same shape as `logits`. A row with no valid position is an error.
Var masked_softmax(const Var& logits, const Mask& mask);

/// Mean negative log-softmax of logits[n, K] at `targets`; rows whose target equals
/// `ignore_index` contribute neither loss nor gradient.
Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_index);

Var sum(const Var& a);
Var mean(const Var& a);

/// Broadcast result shape of two operands; throws DimensionError naming both.
Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace forest::num
