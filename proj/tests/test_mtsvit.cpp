#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "forest/mtsvit/checkpoint.hpp"
#include "forest/mtsvit/model.hpp"
#include "forest/numerics/gradcheck.hpp"
#include "forest/numerics/ops.hpp"
#include "forest/numerics/rng.hpp"
#include "reference_model.hpp"

using namespace forest::mtsvit;
using forest::num::ConfigError;
using forest::num::CounterRng;
using forest::num::NoGradGuard;

namespace {

ModelConfig tiny(bool decoder = true) {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.num_classes = 3;
  c.mlp_ratio = 2;
  c.modalities = {{"s2", 2, 8, 8, 3, true, {1, 2, 2}},
                  {"elevation", 1, 4, 4, 2, true, {1, 2, 2}},
                  {"climate", 3, 1, 1, 2, false, {1, 1, 1}}};
  c.decoder_enabled = decoder;
  return c;
}

Tensor random_tensor(Shape s, std::uint64_t seed, double sigma = 1.0) {
  Tensor t(std::move(s));
  CounterRng rng(seed);
  for (auto& v : t.values()) v = sigma * rng.normal();
  return t;
}

std::map<std::string, Tensor> random_inputs(const ModelConfig& c, std::uint64_t seed) {
  std::map<std::string, Tensor> in;
  for (const auto& m : c.modalities)
    in.emplace(m.name, random_tensor({m.timesteps, m.height, m.width, m.channels}, seed++));
  return in;
}

// Spreads parameters so every path carries a sizeable signal.
void scramble(ModelParams& p, std::uint64_t seed, double sigma = 0.3) {
  CounterRng rng(seed);
  for (auto* q : p.all())
    for (auto& v : q->mutable_value().values()) v += sigma * rng.normal();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("config validation") {
  auto c = tiny();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.modalities[0].height = 7;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("'s2'") != std::string::npos);
    CHECK(std::string(e.what()).find("height") != std::string::npos);
  }
  c = tiny();
  c.query_modality = "climate";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.modalities.resize(1);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.decoder_enabled = false;
  CHECK_NOTHROW(c.validate());
  CHECK(config_from_json(config_to_json(tiny())) == tiny());
}

TEST_CASE("parameter count is a pure function of the config") {
  const auto c = tiny();
  const std::size_t d = 8, hid = 16, K = 3;
  const std::size_t attn = 4 * (d * d + d), ln = 2 * d, mlp = d * hid + hid + hid * d + d;
  const std::size_t enc = 2 * (2 * ln + attn + mlp) + ln;
  const std::size_t dec = 2 * (3 * ln + 2 * attn + mlp) + ln;
  const std::size_t embed = (12 * d + d) + (8 * d + d) + (2 * d + d);
  const std::size_t pos = 16 * d + 3 * d + K * d;
  const std::size_t head = ln + d * d + d + d * 4 + 4;
  CHECK(count_parameters(c) == embed + pos + 2 * enc + dec + head);
  CHECK(init_params(c, 1).scalar_count() == count_parameters(c));
  CHECK(init_params(c, 2).scalar_count() == count_parameters(c));
  CHECK(count_parameters(tiny(false)) < count_parameters(c));
}

TEST_CASE("initialization") {
  const auto p = init_params(tiny(), 3);
  for (const auto* q : p.all()) {
    const auto& n = q->name();
    const bool gain = n.size() > 2 && n.ends_with(".g");
    const bool bias = !gain && (n.ends_with(".b") || n.find(".b") != std::string::npos);
    for (double v : q->value().values()) {
      if (gain) REQUIRE(v == 1.0);
      else if (bias) REQUIRE(v == 0.0);
      else REQUIRE(std::abs(v) <= 0.04);
    }
  }
  const auto w = p.get("temporal.L0.mlp.w1").value();
  double ss = 0;
  for (double v : w.values()) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(w.numel()));
  CHECK(sd > 0.012);
  CHECK(sd < 0.022);
  CHECK(bitwise_equal(init_params(tiny(), 3).get("head.w1").value(), p.get("head.w1").value()));
}

TEST_CASE("fan-in initialization") {
  auto c = tiny();
  c.init = InitScheme::FanIn;
  const auto p = init_params(c, 3);
  auto rms = [](const Tensor& t) {
    double ss = 0;
    for (double v : t.values()) ss += v * v;
    return std::sqrt(ss / static_cast<double>(t.numel()));
  };
  // truncation at 2 sigma leaves 0.8796 sigma
  const Tensor w1 = p.get("temporal.L0.mlp.w1").value(), w2 = p.get("temporal.L0.mlp.w2").value();
  CHECK(rms(w1) == doctest::Approx(0.8796 / std::sqrt(8.0)).epsilon(0.2));
  CHECK(rms(w2) == doctest::Approx(0.8796 / std::sqrt(16.0)).epsilon(0.2));
  for (double v : w2.values()) CHECK(std::abs(v) <= 2.0 / std::sqrt(16.0));
  CHECK(rms(p.get("pos.spatial").value()) == doctest::Approx(1.0).epsilon(0.2));
  CHECK(p.get("spatial.L0.ln1.g").value().values()[0] == 1.0);
  CHECK(p.get("head.b1").value().values()[0] == 0.0);
  CHECK(config_from_json(config_to_json(c)).init == InitScheme::FanIn);
  CHECK_THROWS_AS(init_scheme_from_name("xavier"), ConfigError);
}

TEST_CASE("patchify shapes and flatten order") {
  ModalityConfig s2{"s2", 4, 128, 128, 10, true, {1, 2, 2}};
  auto g = patchify_embed(Tensor({4, 128, 128, 10}, 0.5), s2, Var(Tensor({40, 192}, 0.01)), Var(Tensor({192})));
  CHECK(g.tokens.shape() == Shape{4, 64, 64, 192});
  ModalityConfig el{"elevation", 1, 64, 64, 3, true, {1, 2, 2}};
  g = patchify_embed(Tensor({1, 64, 64, 3}, 0.5), el, Var(Tensor({12, 192}, 0.01)), Var(Tensor({192})));
  CHECK(g.tokens.shape() == Shape{1, 32, 32, 192});

  // d equals the patch volume and the projection is the identity: tokens are the raw patch.
  ModalityConfig m{"m", 2, 2, 2, 3, true, {2, 2, 2}};
  const Tensor x = random_tensor({2, 2, 2, 3}, 5);
  Tensor eye({24, 24});
  for (std::size_t i = 0; i < 24; ++i) eye[i * 24 + i] = 1.0;
  g = patchify_embed(x, m, Var(eye), Var(Tensor({24})));
  REQUIRE(g.tokens.shape() == Shape{1, 1, 1, 24});
  std::size_t f = 0;
  for (std::size_t dt = 0; dt < 2; ++dt)
    for (std::size_t di = 0; di < 2; ++di)
      for (std::size_t dj = 0; dj < 2; ++dj)
        for (std::size_t c = 0; c < 3; ++c) CHECK(g.tokens.value()[f++] == x.at({dt, di, dj, c}));

  ModalityConfig odd{"s1", 4, 15, 16, 2, true, {1, 2, 2}};
  try {
    patchify_embed(Tensor({4, 15, 16, 2}), odd, Var(Tensor({8, 4})), Var(Tensor({4})));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("'s1': height 15") != std::string::npos);
  }
}

TEST_CASE("spatial key mask pads to the longest grid") {
  TokenGrid a{Var(Tensor({1, 64, 64, 2})), {}, "s2", true};
  TokenGrid b{Var(Tensor({1, 32, 32, 2})), {}, "elevation", true};
  TokenGrid c{Var(Tensor({12, 1, 1, 2})), {}, "climate", false};
  const auto m = spatial_key_mask({a, b, c});
  CHECK(m.batch == 2);
  CHECK(m.keys == 4096);
  std::size_t valid_b = 0;
  for (std::size_t j = 0; j < 4096; ++j) {
    CHECK(m.is_valid(0, 0, j));
    if (m.is_valid(1, 0, j)) {
      ++valid_b;
      CHECK(j < 1024);
    }
  }
  CHECK(valid_b == 1024);
}

TEST_CASE("spatial encoder: single modality and climate bypass") {
  auto c = tiny();
  auto p = init_params(c, 1);
  scramble(p, 2);
  reference::Model ref{c, p};
  const Tensor tok = random_tensor({2, 4, 4, 8}, 9);
  const Tensor clim = random_tensor({3, 1, 1, 8}, 10);
  TokenGrid g{Var(tok), std::vector<std::uint8_t>(16, 1), "s2", true};
  TokenGrid cg{Var(clim), {1}, "climate", false};
  const auto out = spatial_encode({g, cg}, c, p);
  CHECK(bitwise_equal(out[1].tokens.value(), clim));
  for (std::size_t a = 0; a < 2; ++a) {
    std::vector<double> seq(tok.data() + a * 128, tok.data() + (a + 1) * 128);
    const auto want = ref.encoder(seq, [](std::size_t, std::size_t) { return true; }, "spatial");
    double diff = 0;
    for (std::size_t i = 0; i < 128; ++i) diff = std::max(diff, std::abs(out[0].tokens.value()[a * 128 + i] - want[i]));
    CHECK(diff < 1e-12);
  }
}

TEST_CASE("temporal encoder: 2-token hand oracle") {
  ModelConfig c = tiny();
  c.layers_per_stage = 1;
  c.num_classes = 1;
  auto p = init_params(c, 4);
  scramble(p, 5);
  const Tensor tok = random_tensor({1, 1, 1, 8}, 6);
  const Var out = temporal_encode(TokenGrid{Var(tok), {1}, "s2", true}, c, p);
  REQUIRE(out.shape() == Shape{1, 1, 8});

  // Layer by hand: the time token only sees itself, the query sees both.
  reference::Model ref{c, p};
  std::vector<double> x(16);
  for (std::size_t e = 0; e < 8; ++e) {
    x[e] = tok[e] + p.get("pos.temporal").value()[e];
    x[8 + e] = p.get("class_queries").value()[e];
  }
  const auto h = ref.norm(x, "temporal.L0.ln1");
  const auto vq = reference::Model::linear(h, p.get("temporal.L0.attn.wq").value(), p.get("temporal.L0.attn.bq").value());
  const auto vk = reference::Model::linear(h, p.get("temporal.L0.attn.wk").value(), p.get("temporal.L0.attn.bk").value());
  const auto vv = reference::Model::linear(h, p.get("temporal.L0.attn.wv").value(), p.get("temporal.L0.attn.bv").value());
  std::vector<double> ctx(16);
  for (std::size_t head = 0; head < 2; ++head) {
    auto dot = [&](std::size_t r, std::size_t j) {
      double s = 0;
      for (std::size_t e = 0; e < 4; ++e) s += vq[r * 8 + head * 4 + e] * vk[j * 8 + head * 4 + e];
      return s / 2.0;
    };
    // row 0: single key -> weight 1 on the time token
    for (std::size_t e = 0; e < 4; ++e) ctx[head * 4 + e] = vv[head * 4 + e];
    const double s0 = dot(1, 0), s1 = dot(1, 1);
    const double a0 = 1.0 / (1.0 + std::exp(s1 - s0)), a1 = 1.0 - a0;
    for (std::size_t e = 0; e < 4; ++e) ctx[8 + head * 4 + e] = a0 * vv[head * 4 + e] + a1 * vv[8 + head * 4 + e];
  }
  auto y = reference::Model::add(x, reference::Model::linear(ctx, p.get("temporal.L0.attn.wo").value(),
                                                             p.get("temporal.L0.attn.bo").value()));
  y = reference::Model::add(y, ref.mlp(ref.norm(y, "temporal.L0.ln2"), "temporal.L0.mlp"));
  const auto want = ref.norm(std::vector<double>(y.begin() + 8, y.end()), "temporal.norm");
  for (std::size_t e = 0; e < 8; ++e) CHECK(out.value()[e] == doctest::Approx(want[e]).epsilon(1e-12));
}

TEST_CASE("temporal encoder: identical pixels give identical streams") {
  auto c = tiny();
  auto p = init_params(c, 7);
  scramble(p, 8);
  const Tensor one = random_tensor({2, 1, 1, 8}, 3);
  Tensor tok({2, 3, 3, 8});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t px = 0; px < 9; ++px)
      for (std::size_t e = 0; e < 8; ++e) tok[(a * 9 + px) * 8 + e] = one[a * 8 + e];
  const Var s = temporal_encode(TokenGrid{Var(tok), std::vector<std::uint8_t>(9, 1), "s2", true}, c, p);
  REQUIRE(s.shape() == Shape{9, 3, 8});
  for (std::size_t px = 1; px < 9; ++px)
    for (std::size_t i = 0; i < 24; ++i) CHECK(s.value()[px * 24 + i] == s.value()[i]);
}

TEST_CASE("full forward matches the loop-level reference") {
  for (bool decoder : {true, false}) {
    auto c = tiny(decoder);
    auto p = init_params(c, 11);
    scramble(p, 12);
    const auto in = random_inputs(c, 20);
    NoGradGuard ng;
    const Var logits = forward(in, c, p);
    CHECK(logits.shape() == Shape{8, 8, 3});
    const auto want = reference::Model{c, p}.forward(in);
    CHECK(max_abs_diff(logits.value(), want) < 1e-10);
  }
}

TEST_CASE("decoder-off reproduces the single-modality pathway") {
  auto c = tiny(false);
  auto p = init_params(c, 13);
  for (const auto* q : p.all()) CHECK(q->name().rfind("decoder.", 0) != 0);
  CHECK_FALSE(p.contains("embed.elevation.w"));
  const auto in = random_inputs(c, 30);
  const auto& q = c.query();
  TokenGrid g = add_spatial_position(patchify_embed(in.at("s2"), q, p.var("embed.s2.w"), p.var("embed.s2.b")), p);
  const auto enc = spatial_encode({g}, c, p);
  const Var want = segmentation_head(temporal_encode(enc[0], c, p), q.h(), q.w(), q.patch, p);
  CHECK(bitwise_equal(forward(in, c, p).value(), want.value()));
}

TEST_CASE("padding invariance is bitwise") {
  auto c = tiny();
  auto p = init_params(c, 14);
  scramble(p, 15);
  const auto in = random_inputs(c, 40);
  NoGradGuard ng;
  const Tensor base = forward(in, c, p).value();
  for (double fill : {1.0, -7.5, 1e3}) {
    ForwardHooks h;
    h.pad_fill = fill;
    CHECK(bitwise_equal(forward(in, c, p, h).value(), base));
  }
}

TEST_CASE("decoder: zero cross-attention output leaves the self-attention transform") {
  auto c = tiny();
  auto p = init_params(c, 16);
  scramble(p, 17);
  for (const char* n : {"decoder.L0.cross.wo", "decoder.L0.cross.bo", "decoder.L1.cross.wo", "decoder.L1.cross.bo"})
    for (auto& v : p.get(n).mutable_value().values()) v = 0.0;
  const Tensor q = random_tensor({16, 3, 8}, 1);
  const Var a = crossmodal_decode(Var(q), {Var(random_tensor({4, 3, 8}, 2))}, c, p);
  const Var b = crossmodal_decode(Var(q), {Var(random_tensor({5, 3, 8}, 3)), Var(random_tensor({1, 3, 8}, 4))}, c, p);
  CHECK(bitwise_equal(a.value(), b.value()));
  // Without the cross term each layer is self-attention then MLP.
  reference::Model ref{c, p};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> x;
    for (std::size_t i = 0; i < 16; ++i) x.insert(x.end(), q.data() + (i * 3 + k) * 8, q.data() + (i * 3 + k + 1) * 8);
    for (std::size_t l = 0; l < 2; ++l) {
      const std::string pre = "decoder.L" + std::to_string(l);
      const auto h = ref.norm(x, pre + ".ln1");
      x = reference::Model::add(x, ref.attention(h, h, [](std::size_t, std::size_t) { return true; }, pre + ".self"));
      x = reference::Model::add(x, ref.mlp(ref.norm(x, pre + ".ln3"), pre + ".mlp"));
    }
    x = ref.norm(x, "decoder.norm");
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t e = 0; e < 8; ++e) CHECK(std::abs(a.value()[(i * 3 + k) * 8 + e] - x[i * 8 + e]) < 1e-12);
  }
  CHECK_THROWS_AS(crossmodal_decode(Var(q), {}, c, p), ConfigError);
}

TEST_CASE("decoder: a single climate token receives all cross-attention weight") {
  auto c = tiny();
  c.layers_per_stage = 1;
  auto p = init_params(c, 18);
  scramble(p, 19);
  const Tensor q = random_tensor({4, 3, 8}, 5);
  const Tensor mem = random_tensor({1, 3, 8}, 6);
  const Var out = crossmodal_decode(Var(q), {Var(mem)}, c, p);
  reference::Model ref{c, p};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> x;
    for (std::size_t i = 0; i < 4; ++i) x.insert(x.end(), q.data() + (i * 3 + k) * 8, q.data() + (i * 3 + k + 1) * 8);
    const std::vector<double> m(mem.data() + k * 8, mem.data() + (k + 1) * 8);
    const auto h = ref.norm(x, "decoder.L0.ln1");
    x = reference::Model::add(x, ref.attention(h, h, [](std::size_t, std::size_t) { return true; }, "decoder.L0.self"));
    // weight 1 on the only key: the cross term is the projected value, the same for every query
    const auto v = reference::Model::linear(m, p.get("decoder.L0.cross.wv").value(), p.get("decoder.L0.cross.bv").value());
    const auto o = reference::Model::linear(v, p.get("decoder.L0.cross.wo").value(), p.get("decoder.L0.cross.bo").value());
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t e = 0; e < 8; ++e) x[i * 8 + e] += o[e];
    x = reference::Model::add(x, ref.mlp(ref.norm(x, "decoder.L0.ln3"), "decoder.L0.mlp"));
    x = ref.norm(x, "decoder.norm");
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t e = 0; e < 8; ++e) CHECK(std::abs(out.value()[(i * 3 + k) * 8 + e] - x[i * 8 + e]) < 1e-12);
  }
}

TEST_CASE("class streams stay isolated") {
  auto c = tiny();
  auto p = init_params(c, 21);
  scramble(p, 22);
  const Tensor q = random_tensor({16, 3, 8}, 7);
  const Tensor e = random_tensor({4, 3, 8}, 8);
  const Tensor cl = random_tensor({1, 3, 8}, 9);
  const Tensor base = crossmodal_decode(Var(q), {Var(e), Var(cl)}, c, p).value();
  for (int which = 0; which < 3; ++which) {
    Tensor q2 = q, e2 = e, c2 = cl;
    Tensor& t = which == 0 ? q2 : which == 1 ? e2 : c2;
    for (std::size_t i = 0; i < t.dim(0); ++i) t[(i * 3 + 1) * 8 + 2] += 0.5;  // stream 1 only
    const Tensor out = crossmodal_decode(Var(q2), {Var(e2), Var(c2)}, c, p).value();
    bool s1_changed = false;
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t d = 0; d < 8; ++d) {
          const std::size_t idx = (i * 3 + k) * 8 + d;
          if (k == 1) s1_changed = s1_changed || out[idx] != base[idx];
          else CHECK(out[idx] == base[idx]);
        }
    CHECK(s1_changed);
  }

  // End to end: a change to class query row 2 only moves logit channel 2.
  const auto in = random_inputs(c, 50);
  NoGradGuard ng;
  const Tensor before = forward(in, c, p).value();
  for (std::size_t d = 0; d < 8; ++d) p.get("class_queries").mutable_value()[2 * 8 + d] += 0.3;
  const Tensor after = forward(in, c, p).value();
  bool moved = false;
  for (std::size_t i = 0; i < before.numel(); ++i) {
    if (i % 3 == 2) moved = moved || before[i] != after[i];
    else CHECK(before[i] == after[i]);
  }
  CHECK(moved);
}

TEST_CASE("pixel-stage independence with the spatial encoder bypassed") {
  auto c = tiny();
  auto p = init_params(c, 23);
  scramble(p, 24);
  auto in = random_inputs(c, 60);
  ForwardHooks h;
  h.identity_spatial = true;
  ForwardTrace t1, t2;
  NoGradGuard ng;
  forward(in, c, p, h, &t1);
  // pixel (5, 2) lives in token (2, 1) = flat index 9 of the 4x4 grid
  for (std::size_t ch = 0; ch < 3; ++ch) in.at("s2").at({1, 5, 2, ch}) += 1.0;
  forward(in, c, p, h, &t2);
  const Tensor& a = t1.class_streams.at("s2").value();
  const Tensor& b = t2.class_streams.at("s2").value();
  for (std::size_t tok = 0; tok < 16; ++tok) {
    bool same = true;
    for (std::size_t i = 0; i < 24; ++i) same = same && a[tok * 24 + i] == b[tok * 24 + i];
    CHECK(same == (tok != 9));
  }
}

TEST_CASE("segmentation head layout") {
  ModelConfig c = tiny();
  auto p = init_params(c, 25);
  scramble(p, 26);
  reference::Model ref{c, p};
  const Tensor dec = random_tensor({4, 3, 8}, 11);  // 2x2 tokens, patch 2x2
  const Tensor logits = segmentation_head(Var(dec), 2, 2, {1, 2, 2}, p).value();
  REQUIRE(logits.shape() == Shape{4, 4, 3});
  for (std::size_t tok = 0; tok < 4; ++tok)
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> u(dec.data() + (tok * 3 + k) * 8, dec.data() + (tok * 3 + k + 1) * 8);
      u = ref.norm(u, "head.ln");
      u = reference::Model::gelu(reference::Model::linear(u, p.get("head.w1").value(), p.get("head.b1").value()));
      u = reference::Model::linear(u, p.get("head.w2").value(), p.get("head.b2").value());
      for (std::size_t unit = 0; unit < 4; ++unit) {
        const std::size_t i = (tok / 2) * 2 + unit / 2, j = (tok % 2) * 2 + unit % 2;
        CHECK(std::abs(logits.at({i, j, k}) - u[unit]) < 1e-12);
      }
    }

  // one token, patch 1x1, K = 2: logits are the two per-stream scalars
  ModelConfig one = tiny();
  one.modalities[0].patch = {1, 1, 1};
  auto p1 = init_params(one, 27);
  const Tensor d1 = random_tensor({1, 2, 8}, 12);
  const Tensor l1 = segmentation_head(Var(d1), 1, 1, {1, 1, 1}, p1).value();
  REQUIRE(l1.shape() == Shape{1, 1, 2});
  reference::Model r1{one, p1};
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> u(d1.data() + k * 8, d1.data() + (k + 1) * 8);
    u = reference::Model::linear(reference::Model::gelu(reference::Model::linear(r1.norm(u, "head.ln"), p1.get("head.w1").value(), p1.get("head.b1").value())),
                                 p1.get("head.w2").value(), p1.get("head.b2").value());
    CHECK(l1[k] == doctest::Approx(u[0]).epsilon(1e-12));
  }
}

TEST_CASE("full-size configuration: stage shapes") {
  const auto specs = forest::datagen::default_modality_set(forest::datagen::Cadence::Seasonal, 1);
  const ModelConfig c = make_config(specs);
  CHECK(c.d == 192);
  CHECK(c.heads == 4);
  CHECK(c.layers_per_stage == 2);
  const auto s = stage_shapes(c);
  CHECK(s.tokens.at("s2") == Shape{4, 64, 64, 192});
  CHECK(s.tokens.at("elevation") == Shape{1, 32, 32, 192});
  CHECK(s.tokens.at("climate") == Shape{12, 1, 1, 192});
  CHECK(s.spatial_batch == Shape{9, 4096, 192});
  CHECK(s.class_streams.at("s2") == Shape{4096, 8, 192});
  CHECK(s.decoder_memory == 4096 + 1024 + 1);
  CHECK(s.logits == Shape{128, 128, 8});
}

TEST_CASE("full-size width on a small grid: real forward and head") {
  const auto specs = forest::datagen::default_modality_set(forest::datagen::Cadence::Seasonal, 1, 8);
  const ModelConfig c = make_config(specs);
  const auto p = init_params(c, 1);
  const auto sample = forest::datagen::gen_plot(1, forest::datagen::scenario("easy"), specs);
  NoGradGuard ng;
  const Var logits = forward(sample.modalities, c, p);
  CHECK(logits.shape() == Shape{8, 8, 8});
  CHECK(logits.value().all_finite());

  // Head at the full query grid: 64x64 tokens with patch 2x2 and K = 8.
  const Var dec(random_tensor({4096, 8, 192}, 3));
  CHECK(segmentation_head(dec, 64, 64, {1, 2, 2}, p).shape() == Shape{128, 128, 8});
  // Temporal encoder at d = 192, K = 8 on a 8x8 token grid.
  const Var streams = temporal_encode(TokenGrid{Var(random_tensor({4, 8, 8, 192}, 4)), std::vector<std::uint8_t>(64, 1), "s2", true}, c, p);
  CHECK(streams.shape() == Shape{64, 8, 192});
}

TEST_CASE("forward errors and determinism") {
  auto c = tiny();
  auto p = init_params(c, 28);
  auto in = random_inputs(c, 70);
  const Tensor a = forward(in, c, p).value();
  CHECK(bitwise_equal(a, forward(in, c, p).value()));
  in.erase("climate");
  CHECK_THROWS_AS(forward(in, c, p), ConfigError);
}

TEST_CASE("full-model gradient check") {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.num_classes = 3;
  c.mlp_ratio = 2;
  c.modalities = {{"s2", 2, 8, 8, 3, true, {1, 2, 2}}, {"elevation", 1, 4, 4, 2, true, {1, 2, 2}}};
  auto p = init_params(c, 31);
  scramble(p, 32, 0.2);
  const auto in = random_inputs(c, 80);
  std::vector<int> targets(64);
  CounterRng rng(33);
  for (auto& t : targets) t = rng.uniform() < 0.1 ? 255 : static_cast<int>(rng.below(3));
  auto loss = [&] {
    const Var logits = forward(in, c, p);
    return forest::num::cross_entropy(forest::num::reshape(logits, {64, 3}), targets, 255);
  };
  // Softmax is shift-invariant per query, so key biases have an exactly zero gradient.
  // Their finite difference is pure round-off; probe everything else and check them apart.
  std::vector<forest::num::Parameter*> probed;
  for (auto* q : p.all())
    if (!q->name().ends_with(".bk")) probed.push_back(q);
  for (std::uint64_t seed : {1, 7}) {
    const auto res = forest::num::grad_check(loss, probed, 300, 1e-4, seed);
    INFO("worst ", res.worst_parameter, "[", res.worst_index, "] analytic ", res.worst_analytic, " numeric ",
         res.worst_numeric);
    CHECK(res.max_relative_error < 1e-4);
  }
  p.zero_grad();
  loss().backward();
  for (auto* q : p.all())
    if (q->name().ends_with(".bk")) {
      const Tensor g = q->grad();
      for (double v : g.values()) CHECK(std::abs(v) < 1e-15);
    }
}

TEST_CASE("checkpoint round trip") {
  auto c = tiny();
  auto p = init_params(c, 40);
  scramble(p, 41);
  const auto path = std::filesystem::temp_directory_path() / "forest_ckpt_test.bin";
  save_checkpoint(path, c, p, {{"note", "x"}});
  const auto ck = load_checkpoint(path);
  CHECK(ck.config == c);
  CHECK(ck.extra.at("note") == "x");
  for (const auto* q : p.all()) CHECK(bitwise_equal(ck.params.get(q->name()).value(), q->value()));
  const auto in = random_inputs(c, 90);
  CHECK(bitwise_equal(forward(in, ck.config, ck.params).value(), forward(in, c, p).value()));

  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}
