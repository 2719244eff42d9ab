#pragma once

#include <cstdint>
#include <vector>

#include "forest/numerics/autograd.hpp"

namespace forest::num {

/// Validity of keys for attention over a batch [B, Sq, Sk]. `batch` is 1 (shared) or B;
/// `rows` is 1 (a key mask shared by every query) or Sq (a per-query pattern).
struct AttentionMask {
  std::size_t batch = 1;
  std::size_t rows = 1;
  std::size_t keys = 0;
  std::vector<std::uint8_t> valid;

  static AttentionMask all_valid(std::size_t keys);
  /// One key mask per batch entry, `valid` laid out [batch, keys].
  static AttentionMask per_batch(std::size_t batch, std::size_t keys, std::vector<std::uint8_t> valid);
  /// One [rows, keys] pattern shared across the batch.
  static AttentionMask pattern(std::size_t rows, std::size_t keys, std::vector<std::uint8_t> valid);

  bool is_valid(std::size_t b, std::size_t r, std::size_t j) const {
    const std::size_t bi = batch == 1 ? 0 : b;
    const std::size_t ri = rows == 1 ? 0 : r;
    return valid[(bi * rows + ri) * keys + j] != 0;
  }
};

/// Scaled dot-product attention with heads split along the feature axis.
/// q [B, Sq, D], k and v [B, Sk, D]; each head uses D/heads features and scale
/// 1/sqrt(D/heads). Masked keys are never read, so their stored values cannot
/// affect the result. A query row without any valid key is an error.
Var attention_core(const Var& q, const Var& k, const Var& v, const AttentionMask& mask, std::size_t heads);

/// Projection weights of one attention block, all stored [in, out].
struct AttentionWeights {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Projects q/k/v, runs attention_core, and applies the output projection.
/// Inputs are [B, S, d]; d must be divisible by `heads`.
Var multi_head_attention(const Var& q, const Var& k, const Var& v, const AttentionMask& mask,
                         const AttentionWeights& w, std::size_t heads);

}  // namespace forest::num
