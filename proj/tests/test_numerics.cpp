#include <cmath>
#include <numeric>

#include "doctest.h"
#include "forest/numerics/attention.hpp"
#include "forest/numerics/gradcheck.hpp"
#include "forest/numerics/ops.hpp"
#include "forest/numerics/optim.hpp"
#include "forest/numerics/rng.hpp"

using namespace forest::num;

namespace {

Tensor random_tensor(Shape shape, CounterRng& rng, double sigma = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = sigma * rng.normal();
  return t;
}

// Scalar loss that weights every output entry by a fixed random coefficient.
Var weighted_sum(const Var& y, std::uint64_t seed) {
  CounterRng rng(seed, 99);
  return sum(mul(y, Var(random_tensor(y.shape(), rng))));
}

AttentionWeights make_weights(std::vector<Parameter>& store, std::size_t d, CounterRng& rng, double sigma) {
  const char* names[] = {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"};
  store.clear();
  store.reserve(8);
  for (int i = 0; i < 8; ++i) {
    Shape s = (i % 2 == 0) ? Shape{d, d} : Shape{d};
    store.emplace_back(names[i], random_tensor(s, rng, sigma));
  }
  return {store[0].var(), store[1].var(), store[2].var(), store[3].var(),
          store[4].var(), store[5].var(), store[6].var(), store[7].var()};
}

}  // namespace

TEST_SUITE("matmul") {
  TEST_CASE("identity and hand arithmetic") {
    Var eye(Tensor({2, 2}, {1, 0, 0, 1}));
    Var b(Tensor({2, 2}, {3, 4, 5, 6}));
    auto c = matmul(eye, b).value();
    CHECK(c.shape() == Shape{2, 2});
    CHECK(c[0] == 3);
    CHECK(c[1] == 4);
    CHECK(c[2] == 5);
    CHECK(c[3] == 6);

    auto d = matmul(Var(Tensor({1, 2}, {1, 2})), Var(Tensor({2, 1}, {3, 4}))).value();
    CHECK(d.shape() == Shape{1, 1});
    CHECK(d[0] == 11);
  }

  TEST_CASE("matches triple-loop oracle") {
    CounterRng rng(7);
    for (std::size_t n : {3u, 5u, 8u}) {
      Tensor a(Shape{n, n}), b(Shape{n, n});
      for (double& v : a.values()) v = static_cast<double>(static_cast<int>(rng.below(19)) - 9);
      for (double& v : b.values()) v = static_cast<double>(static_cast<int>(rng.below(19)) - 9);
      auto c = matmul(Var(a), Var(b)).value();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0;
          for (std::size_t p = 0; p < n; ++p) s += a[i * n + p] * b[p * n + j];
          CHECK(c[i * n + j] == s);
        }
    }
    Tensor a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
    auto c = matmul(Var(a), Var(b)).value();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < 3; ++p) s += a[i * 3 + p] * b[p * 3 + j];
        CHECK(c[i * 3 + j] == doctest::Approx(s).epsilon(1e-14));
      }
  }

  TEST_CASE("batched broadcast") {
    CounterRng rng(3);
    Tensor a = random_tensor({2, 1, 2, 3}, rng), b = random_tensor({3, 3, 4}, rng);
    auto c = matmul(Var(a), Var(b)).value();
    REQUIRE(c.shape() == Shape{2, 3, 2, 4});
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t i = 0; i < 2; ++i)
          for (std::size_t j = 0; j < 4; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < 3; ++p) s += a.at({x, 0, i, p}) * b.at({y, p, j});
            CHECK(c.at({x, y, i, j}) == doctest::Approx(s).epsilon(1e-14));
          }
  }

  TEST_CASE("shape mismatch names both shapes") {
    Var a(Tensor({2, 3})), b(Tensor({2, 2}));
    try {
      matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      std::string msg = e.what();
      CHECK(msg.find("[2,3]") != std::string::npos);
      CHECK(msg.find("[2,2]") != std::string::npos);
    }
  }
}

TEST_SUITE("masked_softmax") {
  TEST_CASE("examples") {
    auto p = masked_softmax(Var(Tensor({2}, {0, 0})), Mask({2}, true)).value();
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
    auto q = masked_softmax(Var(Tensor({2}, {5, -100})), Mask({2}, {1, 0})).value();
    CHECK(q[0] == 1.0);
    CHECK(q[1] == 0.0);
  }

  TEST_CASE("random rows match exp/sum oracle and respect the mask") {
    CounterRng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + rng.below(9);
      Tensor logits = random_tensor({3, n}, rng, 4.0);
      std::vector<std::uint8_t> valid(3 * n);
      for (auto& v : valid) v = rng.uniform() < 0.7;
      for (std::size_t r = 0; r < 3; ++r) valid[r * n + rng.below(n)] = 1;
      Mask mask({3, n}, valid);
      auto p = masked_softmax(Var(logits), mask).value();
      for (std::size_t r = 0; r < 3; ++r) {
        double z = 0, total = 0;
        for (std::size_t j = 0; j < n; ++j)
          if (valid[r * n + j]) z += std::exp(logits[r * n + j]);
        for (std::size_t j = 0; j < n; ++j) {
          if (valid[r * n + j]) {
            CHECK(std::abs(p[r * n + j] - std::exp(logits[r * n + j]) / z) < 1e-12);
          } else {
            CHECK(p[r * n + j] == 0.0);
          }
          total += p[r * n + j];
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
    }
  }

  TEST_CASE("fully masked row is an error") {
    CHECK_THROWS_AS(masked_softmax(Var(Tensor({2, 2}, {1, 2, 3, 4})), Mask({2, 2}, {1, 0, 0, 0})), NumericError);
  }
}

TEST_SUITE("attention") {
  TEST_CASE("single token returns its value projection") {
    CounterRng rng(5);
    std::vector<Parameter> store;
    auto w = make_weights(store, 4, rng, 0.5);
    Var x(random_tensor({1, 1, 4}, rng));
    auto out = multi_head_attention(x, x, x, AttentionMask::all_valid(1), w, 2).value();
    auto expected = linear(linear(x, w.wv, w.bv), w.wo, w.bo).value();
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-14));
  }

  TEST_CASE("masked keys do not influence output bitwise") {
    CounterRng rng(6);
    std::vector<Parameter> store;
    auto w = make_weights(store, 8, rng, 0.4);
    Tensor q = random_tensor({2, 3, 8}, rng);
    Tensor kv = random_tensor({2, 5, 8}, rng);
    std::vector<std::uint8_t> valid{1, 1, 0, 1, 0, 0, 1, 1, 1, 0};
    auto mask = AttentionMask::per_batch(2, 5, valid);
    auto base = multi_head_attention(Var(q), Var(kv), Var(kv), mask, w, 2).value();
    for (int trial = 0; trial < 5; ++trial) {
      Tensor kv2 = kv;
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t j = 0; j < 5; ++j)
          if (!valid[b * 5 + j])
            for (std::size_t c = 0; c < 8; ++c) kv2.at({b, j, c}) = 1e3 * rng.normal();
      auto out = multi_head_attention(Var(q), Var(kv2), Var(kv2), mask, w, 2).value();
      for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == base[i]);
    }
  }

  TEST_CASE("two-token single-head hand oracle") {
    CounterRng rng(8);
    const std::size_t d = 3;
    Tensor q = random_tensor({1, 2, d}, rng), k = random_tensor({1, 2, d}, rng), v = random_tensor({1, 2, d}, rng);
    auto out = attention_core(Var(q), Var(k), Var(v), AttentionMask::all_valid(2), 1).value();
    for (std::size_t r = 0; r < 2; ++r) {
      double s[2];
      for (std::size_t j = 0; j < 2; ++j) {
        s[j] = 0;
        for (std::size_t c = 0; c < d; ++c) s[j] += q.at({0, r, c}) * k.at({0, j, c});
        s[j] /= std::sqrt(3.0);
      }
      const double w0 = 1.0 / (1.0 + std::exp(s[1] - s[0]));
      const double w1 = 1.0 - w0;
      for (std::size_t c = 0; c < d; ++c) {
        CHECK(std::abs(out.at({0, r, c}) - (w0 * v.at({0, 0, c}) + w1 * v.at({0, 1, c}))) < 1e-12);
      }
    }
  }

  TEST_CASE("indivisible width is a configuration error") {
    CounterRng rng(1);
    std::vector<Parameter> store;
    auto w = make_weights(store, 6, rng, 0.1);
    Var x(random_tensor({1, 2, 6}, rng));
    CHECK_THROWS_AS(multi_head_attention(x, x, x, AttentionMask::all_valid(2), w, 4), ConfigError);
  }
}

TEST_SUITE("layer_norm") {
  TEST_CASE("examples") {
    Var g(Tensor({4}, 1.0)), b(Tensor({4}, 0.0));
    auto z = layer_norm(Var(Tensor({4}, 3.5)), g, b).value();
    for (double v : z.values()) CHECK(v == 0.0);

    Var g2(Tensor({2}, 1.0)), b2(Tensor({2}, 0.0));
    auto y = layer_norm(Var(Tensor({2}, {1, -1})), g2, b2).value();
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-5));
  }

  TEST_CASE("random vectors are standardized") {
    CounterRng rng(12);
    const std::size_t d = 16;
    Tensor x = random_tensor({5, d}, rng, 3.0);
    for (double& v : x.values()) v += 7.0;
    auto y = layer_norm(Var(x), Var(Tensor({d}, 1.0)), Var(Tensor({d}, 0.0))).value();
    for (std::size_t r = 0; r < 5; ++r) {
      double mu = 0, var = 0;
      for (std::size_t j = 0; j < d; ++j) mu += y[r * d + j];
      mu /= d;
      for (std::size_t j = 0; j < d; ++j) var += (y[r * d + j] - mu) * (y[r * d + j] - mu);
      var /= d;
      CHECK(std::abs(mu) < 1e-12);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
}

TEST_SUITE("cross_entropy") {
  TEST_CASE("closed forms") {
    std::vector<int> t0{0};
    auto l = cross_entropy(Var(Tensor({1, 2}, {10, -10})), t0, 255).value().item();
    CHECK(l == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-12));
    CHECK(l > 0.0);

    std::vector<int> t3{3};
    auto u = cross_entropy(Var(Tensor({1, 8}, 0.25)), t3, 255).value().item();
    CHECK(u == doctest::Approx(std::log(8.0)).epsilon(1e-14));
  }

  TEST_CASE("ignored rows contribute neither loss nor gradient") {
    CounterRng rng(2);
    Tensor logits = random_tensor({3, 4}, rng);
    Parameter p("logits", logits);
    std::vector<int> t{1, 255, 3};
    Var full = cross_entropy(p.var(), t, 255);
    full.backward();
    Tensor g = p.grad();
    for (std::size_t j = 0; j < 4; ++j) CHECK(g.at({1, j}) == 0.0);

    Tensor kept({2, 4});
    for (std::size_t j = 0; j < 4; ++j) {
      kept.at({0, j}) = logits.at({0, j});
      kept.at({1, j}) = logits.at({2, j});
    }
    std::vector<int> t2{1, 3};
    CHECK(full.value().item() == doctest::Approx(cross_entropy(Var(kept), t2, 255).value().item()).epsilon(1e-15));
  }

  TEST_CASE("all ignored is an error; loss is non-negative") {
    std::vector<int> t{255, 255};
    CHECK_THROWS_AS(cross_entropy(Var(Tensor({2, 3}, 0.0)), t, 255), NumericError);
    CounterRng rng(4);
    for (int i = 0; i < 20; ++i) {
      std::vector<int> tt{static_cast<int>(rng.below(5))};
      CHECK(cross_entropy(Var(random_tensor({1, 5}, rng, 5.0)), tt, 255).value().item() >= 0.0);
    }
  }
}

TEST_SUITE("adam") {
  TEST_CASE("first step closed form") {
    Parameter p("x", Tensor({1}, 0.0));
    p.grad_buffer()[0] = 1.0;
    AdamState st({1}, AdamConfig{});
    adam_step(p, st);
    CHECK(std::abs(p.value()[0] + 1e-3 / (1.0 + 1e-8)) < 1e-18);
  }

  TEST_CASE("zero gradient leaves parameter unchanged") {
    Parameter p("x", Tensor({3}, {1.0, -2.0, 0.5}));
    p.zero_grad();
    AdamState st({3}, AdamConfig{});
    for (int i = 0; i < 3; ++i) adam_step(p, st);
    CHECK(p.value()[0] == 1.0);
    CHECK(p.value()[1] == -2.0);
    CHECK(p.value()[2] == 0.5);
  }

  TEST_CASE("two steps match hand recurrence") {
    const double g = 0.37;
    Parameter p("x", Tensor({1}, 2.0));
    AdamConfig cfg;
    AdamState st({1}, cfg);
    double x = 2.0, m = 0, v = 0;
    for (int t = 1; t <= 2; ++t) {
      p.zero_grad();
      p.grad_buffer()[0] = g;
      adam_step(p, st);
      m = 0.9 * m + 0.1 * g;
      v = 0.9999 * v + 0.0001 * g * g;
      x -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.9999, t))) + 1e-8);
    }
    CHECK(std::abs(p.value()[0] - x) < 1e-12);
    CHECK(st.step == 2);
    CHECK(st.v[0] >= 0.0);
  }
}

TEST_SUITE("grad_check") {
  TEST_CASE("quadratic loss") {
    CounterRng rng(1);
    Parameter x("x", random_tensor({6}, rng));
    auto res = grad_check([&] { return scale(sum(mul(x.var(), x.var())), 0.5); }, {&x}, 6);
    CHECK(res.max_relative_error < 1e-10);
  }

  TEST_CASE("tiny attention block") {
    CounterRng rng(21);
    std::vector<Parameter> store;
    auto w = make_weights(store, 4, rng, 0.5);
    Parameter x("x", random_tensor({2, 3, 4}, rng));
    std::vector<Parameter*> params{&x};
    for (auto& p : store) params.push_back(&p);
    auto mask = AttentionMask::per_batch(2, 3, {1, 1, 0, 1, 0, 1});
    auto res = grad_check([&] { return weighted_sum(multi_head_attention(x.var(), x.var(), x.var(), mask, w, 2), 3); },
                          params, 60);
    CHECK(res.max_relative_error < 1e-4);
  }

  TEST_CASE("corrupted gradient is reported") {
    CounterRng rng(2);
    Parameter x("x", random_tensor({4}, rng));
    // Square with a backward that doubles the true derivative.
    auto bad_square = [](const Var& a) {
      Tensor out = a.value();
      for (double& v : out.values()) v *= v;
      return make_op(std::move(out), {a}, [a](Node& self) {
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
          a.node()->grad_buffer()[i] += 2.0 * (2.0 * a.value()[i]) * self.grad[i];
      }, "bad_square");
    };
    auto res = grad_check([&] { return sum(bad_square(x.var())); }, {&x}, 4);
    CHECK(res.max_relative_error == doctest::Approx(0.5).epsilon(1e-6));
  }

  TEST_CASE("every differentiable op passes on random inputs") {
    CounterRng rng(31);
    Parameter a("a", random_tensor({2, 3, 4}, rng));
    Parameter b("b", random_tensor({4, 5}, rng));
    Parameter c("c", random_tensor({3, 4}, rng));
    Parameter g("g", random_tensor({4}, rng));
    Parameter bias("bias", random_tensor({4}, rng));
    Parameter bb("bb", random_tensor({2, 4, 3}, rng));
    std::vector<Parameter*> all{&a, &b, &c, &g, &bias, &bb};

    std::vector<std::pair<const char*, std::function<Var()>>> cases = {
        {"add", [&] { return add(a.var(), c.var()); }},
        {"sub", [&] { return sub(c.var(), a.var()); }},
        {"mul", [&] { return mul(a.var(), g.var()); }},
        {"scale", [&] { return scale(a.var(), -1.7); }},
        {"matmul", [&] { return matmul(a.var(), b.var()); }},
        {"matmul_batched", [&] { return matmul(a.var(), bb.var()); }},
        {"linear", [&] { return linear(a.var(), b.var(), Var()); }},
        {"reshape", [&] { return reshape(a.var(), {6, 4}); }},
        {"permute", [&] { return permute(a.var(), {2, 0, 1}); }},
        {"concat", [&] { return concat({a.var(), mul(a.var(), a.var())}, 1); }},
        {"slice", [&] { return slice(a.var(), 1, 1, 3); }},
        {"broadcast_to", [&] { return broadcast_to(g.var(), {3, 4}); }},
        {"gelu", [&] { return gelu(a.var()); }},
        {"layer_norm", [&] { return layer_norm(a.var(), g.var(), bias.var()); }},
        {"masked_softmax", [&] { return masked_softmax(c.var(), Mask({3, 4}, {1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 1})); }},
        {"mean", [&] { return mean(mul(a.var(), a.var())); }},
    };
    for (auto& [name, fn] : cases) {
      CAPTURE(name);
      auto res = grad_check([&] { return weighted_sum(fn(), 17); }, all, 40, 1e-5);
      CHECK(res.max_relative_error < 1e-4);
    }
    std::vector<int> targets{0, 3, 255};
    auto ce = grad_check([&] { return cross_entropy(c.var(), targets, 255); }, all, 30, 1e-5);
    CHECK(ce.max_relative_error < 1e-4);
  }

  TEST_CASE("non-finite loss is an error") {
    Parameter x("x", Tensor({1}, 1.0));
    auto inf_loss = [&] {
      return make_op(Tensor::scalar(1.0), {x.var()}, [](Node&) {}, "fine");
    };
    CHECK_NOTHROW(grad_check(inf_loss, {&x}, 1));
    auto bad = [&]() -> Var {
      Tensor t = x.value();
      t[0] = t[0] * 1e308 * 10;
      return make_op(std::move(t), {x.var()}, [](Node&) {}, "overflow");
    };
    CHECK_THROWS_AS(grad_check(bad, {&x}, 1), NumericError);
  }
}

TEST_CASE("counter rng is reproducible") {
  CounterRng a(42, 3), b(42, 3), c(43, 3);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  CounterRng r(5);
  for (int i = 0; i < 1000; ++i) CHECK(std::abs(r.truncated_normal(0.02)) <= 0.04);
}
