#include "forest/mtsvit/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "forest/numerics/ops.hpp"
#include "forest/numerics/rng.hpp"

namespace forest::mtsvit {

using num::ConfigError;
using num::DimensionError;
namespace ops = num;

// ---- config ----------------------------------------------------------------

namespace {

std::vector<const ModalityConfig*> active_modalities(const ModelConfig& c) {
  std::vector<const ModalityConfig*> out;
  for (const auto& m : c.modalities)
    if (c.decoder_enabled || m.name == c.query_modality) out.push_back(&m);
  return out;
}

void check_axis(const ModalityConfig& m, const char* axis, std::size_t extent, std::size_t patch) {
  if (patch == 0 || extent % patch != 0) {
    throw ConfigError("modality '" + m.name + "': " + axis + " " + std::to_string(extent) +
                      " is not divisible by patch " + std::to_string(patch));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw ConfigError("model: d = " + std::to_string(d) + " must be divisible by heads = " + std::to_string(heads));
  }
  if (num_classes == 0) throw ConfigError("model: need at least one class");
  if (layers_per_stage == 0 || mlp_ratio == 0) throw ConfigError("model: layers_per_stage and mlp_ratio must be >= 1");
  if (modalities.empty()) throw ConfigError("model: no modalities");
  std::set<std::string> names;
  for (const auto& m : modalities) {
    if (!names.insert(m.name).second) throw ConfigError("model: duplicate modality '" + m.name + "'");
    if (m.timesteps == 0 || m.height == 0 || m.width == 0 || m.channels == 0) {
      throw ConfigError("modality '" + m.name + "': extents must be >= 1");
    }
    if (!m.spatial && (m.height != 1 || m.width != 1 || m.patch.h != 1 || m.patch.w != 1)) {
      throw ConfigError("modality '" + m.name + "': non-spatial inputs are 1x1 with spatial patch 1");
    }
    check_axis(m, "timesteps", m.timesteps, m.patch.t);
    check_axis(m, "height", m.height, m.patch.h);
    check_axis(m, "width", m.width, m.patch.w);
  }
  const ModalityConfig& q = modality(query_modality);
  if (!q.spatial) throw ConfigError("model: query modality '" + query_modality + "' must be spatial");
  if (decoder_enabled && modalities.size() < 2) {
    throw ConfigError("model: decoder enabled but there is no modality besides '" + query_modality + "'");
  }
}

const ModalityConfig& ModelConfig::modality(const std::string& name) const {
  for (const auto& m : modalities)
    if (m.name == name) return m;
  throw ConfigError("model: no modality '" + name + "'");
}

std::size_t ModelConfig::max_hw() const {
  std::size_t n = 0;
  for (const auto* m : active_modalities(*this))
    if (m->spatial) n = std::max(n, m->h() * m->w());
  return n;
}

std::size_t ModelConfig::max_t() const {
  std::size_t n = 0;
  for (const auto* m : active_modalities(*this)) n = std::max(n, m->t());
  return n;
}

PatchSize default_patch(const datagen::ModalitySpec& spec) {
  if (!spec.spatial) return {1, 1, 1};
  return {1, 2, 2};
}

ModelConfig make_config(std::span<const datagen::ModalitySpec> specs, std::size_t d, std::size_t heads) {
  ModelConfig c;
  c.d = d;
  c.heads = heads;
  for (const auto& s : specs) {
    c.modalities.push_back({s.name, s.timesteps, s.height, s.width, s.channels, s.spatial, default_patch(s)});
  }
  c.decoder_enabled = specs.size() > 1;
  return c;
}

std::string_view init_scheme_name(InitScheme s) noexcept { return s == InitScheme::FanIn ? "fan_in" : "fixed"; }

InitScheme init_scheme_from_name(std::string_view name) {
  if (name == "fixed") return InitScheme::Fixed;
  if (name == "fan_in") return InitScheme::FanIn;
  throw ConfigError("unknown init scheme '" + std::string(name) + "' (fixed | fan_in)");
}

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["d"] = c.d;
  j["layers_per_stage"] = c.layers_per_stage;
  j["heads"] = c.heads;
  j["num_classes"] = c.num_classes;
  j["mlp_ratio"] = c.mlp_ratio;
  j["query_modality"] = c.query_modality;
  j["decoder_enabled"] = c.decoder_enabled;
  j["init"] = init_scheme_name(c.init);
  j["modalities"] = nlohmann::json::array();
  for (const auto& m : c.modalities) {
    j["modalities"].push_back({{"name", m.name},
                               {"shape", {m.timesteps, m.height, m.width, m.channels}},
                               {"spatial", m.spatial},
                               {"patch", {m.patch.t, m.patch.h, m.patch.w}}});
  }
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.layers_per_stage = j.at("layers_per_stage").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  c.query_modality = j.at("query_modality").get<std::string>();
  c.decoder_enabled = j.at("decoder_enabled").get<bool>();
  c.init = init_scheme_from_name(j.value("init", "fixed"));
  for (const auto& mj : j.at("modalities")) {
    ModalityConfig m;
    m.name = mj.at("name").get<std::string>();
    const auto s = mj.at("shape").get<std::vector<std::size_t>>();
    const auto p = mj.at("patch").get<std::vector<std::size_t>>();
    if (s.size() != 4 || p.size() != 3) throw ConfigError("model config: malformed modality '" + m.name + "'");
    m.timesteps = s[0];
    m.height = s[1];
    m.width = s[2];
    m.channels = s[3];
    m.spatial = mj.at("spatial").get<bool>();
    m.patch = {p[0], p[1], p[2]};
    c.modalities.push_back(m);
  }
  c.validate();
  return c;
}

// ---- parameters ------------------------------------------------------------

Parameter& ModelParams::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_[name] = params_.size();
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  return *params_.back();
}

Parameter& ModelParams::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return *params_[it->second];
}

const Parameter& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return *params_[it->second];
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value().numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

namespace {

enum class Init { Weight, Embedding, Zero, One };  // Embedding: position tables and class queries

struct Spec {
  std::string name;
  Shape shape;
  Init init;
};

void attention_specs(std::vector<Spec>& out, const std::string& pre, std::size_t d) {
  for (const char* x : {"q", "k", "v", "o"}) {
    out.push_back({pre + ".w" + x, {d, d}, Init::Weight});
    out.push_back({pre + ".b" + x, {d}, Init::Zero});
  }
}

void norm_specs(std::vector<Spec>& out, const std::string& pre, std::size_t d) {
  out.push_back({pre + ".g", {d}, Init::One});
  out.push_back({pre + ".b", {d}, Init::Zero});
}

void mlp_specs(std::vector<Spec>& out, const std::string& pre, std::size_t d, std::size_t hidden) {
  out.push_back({pre + ".w1", {d, hidden}, Init::Weight});
  out.push_back({pre + ".b1", {hidden}, Init::Zero});
  out.push_back({pre + ".w2", {hidden, d}, Init::Weight});
  out.push_back({pre + ".b2", {d}, Init::Zero});
}

void encoder_specs(std::vector<Spec>& out, const std::string& stage, const ModelConfig& c) {
  for (std::size_t l = 0; l < c.layers_per_stage; ++l) {
    const std::string pre = stage + ".L" + std::to_string(l);
    norm_specs(out, pre + ".ln1", c.d);
    attention_specs(out, pre + ".attn", c.d);
    norm_specs(out, pre + ".ln2", c.d);
    mlp_specs(out, pre + ".mlp", c.d, c.d * c.mlp_ratio);
  }
  norm_specs(out, stage + ".norm", c.d);
}

std::vector<Spec> param_specs(const ModelConfig& c) {
  c.validate();
  std::vector<Spec> out;
  const std::size_t d = c.d;
  for (const auto* m : active_modalities(c)) {
    out.push_back({"embed." + m->name + ".w", {m->patch_volume(), d}, Init::Weight});
    out.push_back({"embed." + m->name + ".b", {d}, Init::Zero});
  }
  out.push_back({"pos.spatial", {c.max_hw(), d}, Init::Embedding});
  out.push_back({"pos.temporal", {c.max_t(), d}, Init::Embedding});
  out.push_back({"class_queries", {c.num_classes, d}, Init::Embedding});
  encoder_specs(out, "spatial", c);
  encoder_specs(out, "temporal", c);
  if (c.decoder_enabled) {
    for (std::size_t l = 0; l < c.layers_per_stage; ++l) {
      const std::string pre = "decoder.L" + std::to_string(l);
      norm_specs(out, pre + ".ln1", d);
      attention_specs(out, pre + ".self", d);
      norm_specs(out, pre + ".ln2", d);
      attention_specs(out, pre + ".cross", d);
      norm_specs(out, pre + ".ln3", d);
      mlp_specs(out, pre + ".mlp", d, d * c.mlp_ratio);
    }
    norm_specs(out, "decoder.norm", d);
  }
  const PatchSize qp = c.query().patch;
  norm_specs(out, "head.ln", d);
  out.push_back({"head.w1", {d, d}, Init::Weight});
  out.push_back({"head.b1", {d}, Init::Zero});
  out.push_back({"head.w2", {d, qp.h * qp.w}, Init::Weight});
  out.push_back({"head.b2", {qp.h * qp.w}, Init::Zero});
  return out;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p;
  num::CounterRng rng(seed, 0x696e6974ULL);
  for (const auto& s : param_specs(cfg)) {
    Tensor t(s.shape, s.init == Init::One ? 1.0 : 0.0);
    const bool fan_in = cfg.init == InitScheme::FanIn;
    if (s.init == Init::Weight) {
      const double sigma = fan_in ? 1.0 / std::sqrt(static_cast<double>(s.shape[0])) : 0.02;
      for (auto& v : t.values()) v = rng.truncated_normal(sigma, 2.0);
    }
    if (s.init == Init::Embedding)
      for (auto& v : t.values()) v = fan_in ? rng.normal() : rng.truncated_normal(0.02, 2.0);
    p.add(s.name, std::move(t));
  }
  return p;
}

std::size_t count_parameters(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : param_specs(cfg)) n += num::shape_numel(s.shape);
  return n;
}

// ---- building blocks -------------------------------------------------------

namespace {

Var norm(const Var& x, const ModelParams& p, const std::string& pre) {
  return ops::layer_norm(x, p.var(pre + ".g"), p.var(pre + ".b"));
}

num::AttentionWeights attn_weights(const ModelParams& p, const std::string& pre) {
  return {p.var(pre + ".wq"), p.var(pre + ".bq"), p.var(pre + ".wk"), p.var(pre + ".bk"),
          p.var(pre + ".wv"), p.var(pre + ".bv"), p.var(pre + ".wo"), p.var(pre + ".bo")};
}

Var mlp(const Var& x, const ModelParams& p, const std::string& pre) {
  Var h = ops::gelu(ops::linear(x, p.var(pre + ".w1"), p.var(pre + ".b1")));
  return ops::linear(h, p.var(pre + ".w2"), p.var(pre + ".b2"));
}

// Pre-norm encoder stack with a final LayerNorm.
Var encoder_stack(Var x, const num::AttentionMask& mask, const ModelConfig& c, const ModelParams& p,
                  const std::string& stage) {
  for (std::size_t l = 0; l < c.layers_per_stage; ++l) {
    const std::string pre = stage + ".L" + std::to_string(l);
    Var h = norm(x, p, pre + ".ln1");
    x = ops::add(x, num::multi_head_attention(h, h, h, mask, attn_weights(p, pre + ".attn"), c.heads));
    x = ops::add(x, mlp(norm(x, p, pre + ".ln2"), p, pre + ".mlp"));
  }
  return norm(x, p, stage + ".norm");
}

}  // namespace

TokenGrid patchify_embed(const Tensor& x, const ModalityConfig& m, const Var& weight, const Var& bias) {
  if (x.rank() != 4) throw DimensionError("patchify '" + m.name + "': expected [T,H,W,C], got " + num::shape_string(x.shape()));
  const std::size_t T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (C != m.channels) {
    throw DimensionError("patchify '" + m.name + "': " + std::to_string(C) + " channels, config says " +
                         std::to_string(m.channels));
  }
  ModalityConfig actual = m;
  actual.timesteps = T;
  actual.height = H;
  actual.width = W;
  check_axis(actual, "timesteps", T, m.patch.t);
  check_axis(actual, "height", H, m.patch.h);
  check_axis(actual, "width", W, m.patch.w);
  const auto [pt, ph, pw] = m.patch;
  const std::size_t t = T / pt, h = H / ph, w = W / pw, P = pt * ph * pw * C;

  Tensor flat(Shape{t * h * w, P});
  double* dst = flat.data();
  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t dt = 0; dt < pt; ++dt)
          for (std::size_t di = 0; di < ph; ++di)
            for (std::size_t dj = 0; dj < pw; ++dj) {
              const double* src = x.data() + (((a * pt + dt) * H + i * ph + di) * W + j * pw + dj) * C;
              dst = std::copy(src, src + C, dst);
            }
  Var emb = ops::linear(Var(std::move(flat)), weight, bias);
  TokenGrid g;
  g.tokens = ops::reshape(emb, {t, h, w, weight.shape()[1]});
  g.valid.assign(h * w, 1);
  g.modality = m.name;
  g.spatial = m.spatial;
  return g;
}

TokenGrid add_spatial_position(const TokenGrid& g, const ModelParams& p) {
  const Shape& s = g.tokens.shape();
  const std::size_t hw = s[1] * s[2];
  Var table = p.var("pos.spatial");
  if (hw > table.shape()[0]) throw DimensionError("spatial positions: grid larger than the table");
  Var pos = ops::reshape(ops::slice(table, 0, 0, hw), {1, s[1], s[2], s[3]});
  TokenGrid out = g;
  out.tokens = ops::add(g.tokens, pos);
  return out;
}

num::AttentionMask spatial_key_mask(const std::vector<TokenGrid>& grids) {
  std::size_t n = 0, batch = 0;
  for (const auto& g : grids) {
    if (!g.spatial) continue;
    n = std::max(n, g.tokens.shape()[1] * g.tokens.shape()[2]);
    batch += g.tokens.shape()[0];
  }
  if (n == 0) throw ConfigError("spatial encoder: no spatial modality");
  std::vector<std::uint8_t> valid;
  valid.reserve(batch * n);
  for (const auto& g : grids) {
    if (!g.spatial) continue;
    const std::size_t hw = g.tokens.shape()[1] * g.tokens.shape()[2];
    for (std::size_t a = 0; a < g.tokens.shape()[0]; ++a)
      for (std::size_t k = 0; k < n; ++k) valid.push_back(k < hw);
  }
  return num::AttentionMask::per_batch(batch, n, std::move(valid));
}

std::vector<TokenGrid> spatial_encode(const std::vector<TokenGrid>& grids, const ModelConfig& cfg,
                                      const ModelParams& p, const ForwardHooks& hooks) {
  num::AttentionMask mask = spatial_key_mask(grids);
  std::vector<TokenGrid> out = grids;
  if (hooks.identity_spatial) return out;

  const std::size_t n = mask.keys;
  const double fill = hooks.pad_fill.value_or(0.0);
  std::vector<Var> parts;
  for (const auto& g : grids) {
    if (!g.spatial) continue;
    const Shape& s = g.tokens.shape();
    const std::size_t t = s[0], hw = s[1] * s[2], d = s[3];
    Var seq = ops::reshape(g.tokens, {t, hw, d});
    // Padded positions are masked as keys and dropped afterwards, so their values never matter.
    if (hw < n) seq = ops::concat({seq, Var(Tensor(Shape{t, n - hw, d}, fill))}, 1);
    parts.push_back(seq);
  }
  Var x = parts.size() == 1 ? parts[0] : ops::concat(parts, 0);
  Var y = encoder_stack(x, mask, cfg, p, "spatial");

  std::size_t offset = 0;
  for (auto& g : out) {
    if (!g.spatial) continue;
    const Shape s = g.tokens.shape();
    const std::size_t t = s[0], hw = s[1] * s[2];
    Var mine = ops::slice(y, 0, offset, offset + t);
    if (hw < n) mine = ops::slice(mine, 1, 0, hw);
    g.tokens = ops::reshape(mine, s);
    offset += t;
  }
  return out;
}

num::AttentionMask temporal_mask(std::size_t t, std::size_t k) {
  const std::size_t s = t + k;
  std::vector<std::uint8_t> v(s * s, 0);
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < t; ++c) v[r * s + c] = 1;
    if (r >= t) v[r * s + r] = 1;
  }
  return num::AttentionMask::pattern(s, s, std::move(v));
}

Var temporal_encode(const TokenGrid& grid, const ModelConfig& cfg, const ModelParams& p) {
  const Shape& s = grid.tokens.shape();
  const std::size_t t = s[0], hw = s[1] * s[2], d = s[3], K = cfg.num_classes;
  Var table = p.var("pos.temporal");
  if (t > table.shape()[0]) throw DimensionError("temporal positions: sequence longer than the table");
  Var seq = ops::permute(ops::reshape(grid.tokens, {t, hw, d}), {1, 0, 2});
  seq = ops::add(seq, ops::reshape(ops::slice(table, 0, 0, t), {1, t, d}));
  Var queries = ops::broadcast_to(ops::reshape(p.var("class_queries"), {1, K, d}), {hw, K, d});
  Var x = ops::concat({seq, queries}, 1);
  // Only the class-query rows are kept; the final norm is per token, so slice first.
  for (std::size_t l = 0; l < cfg.layers_per_stage; ++l) {
    const std::string pre = "temporal.L" + std::to_string(l);
    Var h = norm(x, p, pre + ".ln1");
    x = ops::add(x, num::multi_head_attention(h, h, h, temporal_mask(t, K), attn_weights(p, pre + ".attn"), cfg.heads));
    x = ops::add(x, mlp(norm(x, p, pre + ".ln2"), p, pre + ".mlp"));
  }
  return norm(ops::slice(x, 1, t, t + K), p, "temporal.norm");
}

Var crossmodal_decode(const Var& query, const std::vector<Var>& others, const ModelConfig& cfg,
                      const ModelParams& p) {
  if (others.empty()) throw ConfigError("decoder: no key/value modalities");
  const std::size_t K = query.shape()[1];
  std::vector<Var> mem_parts;
  for (const auto& o : others) {
    if (o.shape().size() != 3 || o.shape()[1] != K || o.shape()[2] != query.shape()[2]) {
      throw DimensionError("decoder: stream " + num::shape_string(o.shape()) + " does not match query " +
                           num::shape_string(query.shape()));
    }
    mem_parts.push_back(ops::permute(o, {1, 0, 2}));
  }
  Var mem = mem_parts.size() == 1 ? mem_parts[0] : ops::concat(mem_parts, 1);
  Var x = ops::permute(query, {1, 0, 2});
  const auto self_mask = num::AttentionMask::all_valid(x.shape()[1]);
  const auto cross_mask = num::AttentionMask::all_valid(mem.shape()[1]);
  for (std::size_t l = 0; l < cfg.layers_per_stage; ++l) {
    const std::string pre = "decoder.L" + std::to_string(l);
    Var h = norm(x, p, pre + ".ln1");
    x = ops::add(x, num::multi_head_attention(h, h, h, self_mask, attn_weights(p, pre + ".self"), cfg.heads));
    h = norm(x, p, pre + ".ln2");
    x = ops::add(x, num::multi_head_attention(h, mem, mem, cross_mask, attn_weights(p, pre + ".cross"), cfg.heads));
    x = ops::add(x, mlp(norm(x, p, pre + ".ln3"), p, pre + ".mlp"));
  }
  return ops::permute(norm(x, p, "decoder.norm"), {1, 0, 2});
}

Var segmentation_head(const Var& decoded, std::size_t h, std::size_t w, const PatchSize& patch,
                      const ModelParams& p) {
  const std::size_t K = decoded.shape()[1];
  if (decoded.shape()[0] != h * w) {
    throw DimensionError("head: " + num::shape_string(decoded.shape()) + " does not cover a " + std::to_string(h) +
                         "x" + std::to_string(w) + " token grid");
  }
  Var x = norm(decoded, p, "head.ln");
  x = ops::gelu(ops::linear(x, p.var("head.w1"), p.var("head.b1")));
  x = ops::linear(x, p.var("head.w2"), p.var("head.b2"));  // [hw, K, ph*pw]
  x = ops::reshape(x, {h, w, K, patch.h, patch.w});
  x = ops::permute(x, {0, 3, 1, 4, 2});  // [h, ph, w, pw, K]
  return ops::reshape(x, {h * patch.h, w * patch.w, K});
}

Var forward(const std::map<std::string, Tensor>& inputs, const ModelConfig& cfg, const ModelParams& p,
            const ForwardHooks& hooks, ForwardTrace* trace) {
  const auto active = active_modalities(cfg);
  std::vector<TokenGrid> embedded;
  for (const auto* m : active) {
    auto it = inputs.find(m->name);
    if (it == inputs.end()) throw ConfigError("forward: sample has no modality '" + m->name + "'");
    TokenGrid g = patchify_embed(it->second, *m, p.var("embed." + m->name + ".w"), p.var("embed." + m->name + ".b"));
    if (g.spatial) g = add_spatial_position(g, p);
    embedded.push_back(std::move(g));
  }
  std::vector<TokenGrid> encoded = spatial_encode(embedded, cfg, p, hooks);

  std::map<std::string, Var> streams;
  for (const auto& g : encoded) streams[g.modality] = temporal_encode(g, cfg, p);

  const ModalityConfig& q = cfg.query();
  Var decoded = streams.at(q.name);
  if (cfg.decoder_enabled) {
    std::vector<Var> others;
    for (const auto* m : active)
      if (m->name != q.name) others.push_back(streams.at(m->name));
    decoded = crossmodal_decode(decoded, others, cfg, p);
  }
  Var logits = segmentation_head(decoded, q.h(), q.w(), q.patch, p);
  if (trace) {
    trace->embedded = std::move(embedded);
    trace->encoded = std::move(encoded);
    trace->class_streams = std::move(streams);
    trace->decoded = decoded;
    trace->logits = logits;
  }
  return logits;
}

StageShapes stage_shapes(const ModelConfig& cfg) {
  cfg.validate();
  StageShapes s;
  std::size_t batch = 0;
  for (const auto* m : active_modalities(cfg)) {
    s.tokens[m->name] = {m->t(), m->h(), m->w(), cfg.d};
    s.class_streams[m->name] = {m->h() * m->w(), cfg.num_classes, cfg.d};
    if (m->spatial) batch += m->t();
    if (cfg.decoder_enabled && m->name != cfg.query_modality) s.decoder_memory += m->h() * m->w();
  }
  s.spatial_batch = {batch, cfg.max_hw(), cfg.d};
  const auto& q = cfg.query();
  s.logits = {q.height, q.width, cfg.num_classes};
  return s;
}

}  // namespace forest::mtsvit
