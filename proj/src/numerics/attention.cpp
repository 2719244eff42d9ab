#include "forest/numerics/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "forest/numerics/ops.hpp"

namespace forest::num {

AttentionMask AttentionMask::all_valid(std::size_t keys) {
  AttentionMask m;
  m.keys = keys;
  m.valid.assign(keys, 1);
  return m;
}

AttentionMask AttentionMask::per_batch(std::size_t batch, std::size_t keys, std::vector<std::uint8_t> valid) {
  if (valid.size() != batch * keys) throw DimensionError("attention mask: expected batch*keys entries");
  AttentionMask m;
  m.batch = batch;
  m.keys = keys;
  m.valid = std::move(valid);
  return m;
}

AttentionMask AttentionMask::pattern(std::size_t rows, std::size_t keys, std::vector<std::uint8_t> valid) {
  if (valid.size() != rows * keys) throw DimensionError("attention mask: expected rows*keys entries");
  AttentionMask m;
  m.rows = rows;
  m.keys = keys;
  m.valid = std::move(valid);
  return m;
}

namespace {

void check_attention_shapes(const Var& q, const Var& k, const Var& v, const AttentionMask& mask,
                            std::size_t heads) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  const Shape& vs = v.shape();
  if (qs.size() != 3 || ks.size() != 3 || vs.size() != 3 || qs[0] != ks[0] || ks != vs || qs[2] != ks[2]) {
    throw DimensionError("attention: incompatible q " + shape_string(qs) + ", k " + shape_string(ks) + ", v " +
                         shape_string(vs));
  }
  if (heads == 0 || qs[2] % heads != 0) {
    throw ConfigError("attention: feature width " + std::to_string(qs[2]) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (mask.keys != ks[1] || (mask.batch != 1 && mask.batch != qs[0]) || (mask.rows != 1 && mask.rows != qs[1]) ||
      mask.valid.size() != mask.batch * mask.rows * mask.keys) {
    throw DimensionError("attention: mask [" + std::to_string(mask.batch) + "," + std::to_string(mask.rows) + "," +
                         std::to_string(mask.keys) + "] does not fit q " + shape_string(qs) + ", k " +
                         shape_string(ks));
  }
}

// Valid key indices for (b, r).
void valid_keys(const AttentionMask& mask, std::size_t b, std::size_t r, std::vector<std::size_t>& out) {
  out.clear();
  for (std::size_t j = 0; j < mask.keys; ++j) {
    if (mask.is_valid(b, r, j)) out.push_back(j);
  }
}

}  // namespace

Var attention_core(const Var& q, const Var& k, const Var& v, const AttentionMask& mask, std::size_t heads) {
  check_attention_shapes(q, k, v, mask, heads);
  const std::size_t batch = q.shape()[0];
  const std::size_t sq = q.shape()[1];
  const std::size_t sk = k.shape()[1];
  const std::size_t width = q.shape()[2];
  const std::size_t dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const bool record = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  std::shared_ptr<std::vector<double>> probs;
  if (record) probs = std::make_shared<std::vector<double>>(batch * heads * sq * sk, 0.0);

  Tensor out(q.shape(), 0.0);
  const double* qv = q.value().data();
  const double* kv = k.value().data();
  const double* vv = v.value().data();
  std::vector<std::size_t> keys;
  std::vector<double> p(sk);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < sq; ++r) {
      if (r == 0 || mask.rows != 1) valid_keys(mask, b, r, keys);
      if (keys.empty()) {
        throw NumericError("attention: query " + std::to_string(r) + " of batch " + std::to_string(b) +
                           " has no valid key");
      }
      for (std::size_t h = 0; h < heads; ++h) {
        const double* qr = qv + (b * sq + r) * width + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t idx = 0; idx < keys.size(); ++idx) {
          const double* kj = kv + (b * sk + keys[idx]) * width + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qr[c] * kj[c];
          p[idx] = s * scale;
          mx = std::max(mx, p[idx]);
        }
        double total = 0.0;
        for (std::size_t idx = 0; idx < keys.size(); ++idx) {
          p[idx] = std::exp(p[idx] - mx);
          total += p[idx];
        }
        double* orow = out.data() + (b * sq + r) * width + h * dh;
        for (std::size_t idx = 0; idx < keys.size(); ++idx) {
          const double w = p[idx] / total;
          const double* vj = vv + (b * sk + keys[idx]) * width + h * dh;
          for (std::size_t c = 0; c < dh; ++c) orow[c] += w * vj[c];
          if (probs) (*probs)[((b * heads + h) * sq + r) * sk + keys[idx]] = w;
        }
      }
    }
  }
  if (!record) return make_op(std::move(out), {}, nullptr, "attention");

  return make_op(std::move(out), {q, k, v}, [q, k, v, mask, probs, heads, batch, sq, sk, width, dh, scale](Node& self) {
    const double* g = self.grad.data();
    const double* qv = q.value().data();
    const double* kv = k.value().data();
    const double* vv = v.value().data();
    double* gq = q.requires_grad() ? q.node()->grad_buffer().data() : nullptr;
    double* gk = k.requires_grad() ? k.node()->grad_buffer().data() : nullptr;
    double* gv = v.requires_grad() ? v.node()->grad_buffer().data() : nullptr;
    std::vector<std::size_t> keys;
    std::vector<double> dp(sk);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t r = 0; r < sq; ++r) {
        if (r == 0 || mask.rows != 1) valid_keys(mask, b, r, keys);
        for (std::size_t h = 0; h < heads; ++h) {
          const double* prow = probs->data() + ((b * heads + h) * sq + r) * sk;
          const double* go = g + (b * sq + r) * width + h * dh;
          const double* qr = qv + (b * sq + r) * width + h * dh;
          double dot = 0.0;
          for (std::size_t idx = 0; idx < keys.size(); ++idx) {
            const std::size_t j = keys[idx];
            const double* vj = vv + (b * sk + j) * width + h * dh;
            double s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += go[c] * vj[c];
            dp[idx] = s;
            dot += s * prow[j];
          }
          for (std::size_t idx = 0; idx < keys.size(); ++idx) {
            const std::size_t j = keys[idx];
            const double pj = prow[j];
            const double ds = pj * (dp[idx] - dot) * scale;
            const double* kj = kv + (b * sk + j) * width + h * dh;
            if (gq) {
              double* gqr = gq + (b * sq + r) * width + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gqr[c] += ds * kj[c];
            }
            if (gk) {
              double* gkj = gk + (b * sk + j) * width + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qr[c];
            }
            if (gv) {
              double* gvj = gv + (b * sk + j) * width + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gvj[c] += pj * go[c];
            }
          }
        }
      }
    }
  }, "attention");
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v, const AttentionMask& mask,
                         const AttentionWeights& w, std::size_t heads) {
  const std::size_t d = q.shape().back();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("multi_head_attention: embedding width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  Var qp = linear(q, w.wq, w.bq);
  Var kp = linear(k, w.wk, w.bk);
  Var vp = linear(v, w.wv, w.bv);
  Var att = attention_core(qp, kp, vp, mask, heads);
  return linear(att, w.wo, w.bo);
}

}  // namespace forest::num
