#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "forest/datagen.hpp"

using namespace forest::datagen;
using forest::labels::ClassId;
using forest::num::ConfigError;
using forest::num::Shape;
using forest::num::Tensor;

TEST_CASE("default modality shapes") {
  auto s = default_modality_set(Cadence::Seasonal, 1);
  CHECK(find_spec(s, "s2").shape() == Shape{4, 128, 128, 10});
  CHECK(find_spec(s, "s1").shape() == Shape{4, 128, 128, 4});
  CHECK(find_spec(s, "climate").shape() == Shape{12, 1, 1, 5});
  CHECK_FALSE(find_spec(s, "climate").spatial);
  CHECK(find_spec(s, "elevation").shape() == Shape{1, 64, 64, 3});
  CHECK(find_spec(default_modality_set(Cadence::Monthly, 3), "s2").shape() == Shape{36, 128, 128, 10});
  CHECK(find_spec(default_modality_set(Cadence::Monthly, 3), "climate").shape() == Shape{36, 1, 1, 5});
  CHECK(find_spec(default_modality_set(Cadence::Annual, 1), "s2").shape() == Shape{1, 128, 128, 10});
  CHECK_THROWS_AS(default_modality_set(Cadence::Annual, 0), ConfigError);
  CHECK_THROWS_AS(default_modality_set(Cadence::Annual, 4), ConfigError);
  CHECK_THROWS_AS(cadence_from_name("weekly"), ConfigError);
  CHECK(cadence_from_name("seasonal") == Cadence::Seasonal);

  ModalitySpec bad{"x", TimeBasis::Static, Cadence::Annual, 1, 2, 1, 1, false};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scenario catalog documents each scenario") {
  for (const auto& name : scenario_names()) {
    const auto& sc = scenario(name);
    CHECK_FALSE(sc.supports.empty());
    CHECK_FALSE(sc.signal.empty());
  }
  CHECK_NOTHROW(scenario("temporal-phase"));
  CHECK_NOTHROW(scenario("modal-fusion"));
  CHECK_NOTHROW(scenario("easy"));
  CHECK_THROWS_AS(scenario("nope"), ConfigError);
}

TEST_CASE("gen_plot is bitwise deterministic and f32-exact") {
  const auto specs = default_modality_set(Cadence::Seasonal, 2, 16);
  const auto a = gen_plot(77, scenario("easy"), specs);
  const auto b = gen_plot(77, scenario("easy"), specs);
  CHECK(a.labels.pixels == b.labels.pixels);
  for (const auto& [name, t] : a.modalities) {
    const auto& u = b.modalities.at(name);
    CHECK(t.shape() == find_spec(specs, name).shape());
    CHECK(t.all_finite());
    CHECK(std::equal(t.values().begin(), t.values().end(), u.values().begin()));
    for (double v : t.values()) REQUIRE(v == static_cast<double>(static_cast<float>(v)));
  }
  CHECK(a.labels.height == 16);
  CHECK(a.labels.width == 16);
  const auto c = gen_plot(78, scenario("easy"), specs);
  CHECK(c.labels.pixels != a.labels.pixels);
}

TEST_CASE("flat scenario is constant") {
  const auto specs = default_modality_set(Cadence::Monthly, 1, 8);
  const auto p = gen_plot(5, scenario("flat"), specs);
  for (auto c : p.labels.pixels) CHECK(c == ClassId::NaturalForest);
  for (const auto& [name, t] : p.modalities) {
    const std::size_t C = t.dim(3);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == t[i % C]);
  }
}

TEST_CASE("noiseless scenarios are recovered by their decision rule") {
  for (const auto& name : {"easy", "temporal-phase", "modal-fusion", "flat"}) {
    Scenario sc = scenario(name);
    sc.noise = 0.0;
    for (Cadence cad : {Cadence::Seasonal, Cadence::Monthly}) {
      const auto specs = default_modality_set(cad, 1, 16);
      std::set<ClassId> seen;
      std::size_t wrong = 0, known = 0;
      for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const auto p = gen_plot(seed, sc, specs);
        for (std::size_t i = 0; i < 16; ++i)
          for (std::size_t j = 0; j < 16; ++j) {
            const ClassId truth = p.labels.at(i, j);
            if (truth == ClassId::Unknown) continue;
            ++known;
            seen.insert(truth);
            wrong += decode_pixel(sc, p, find_spec(specs, "s2"), i, j) != truth;
          }
      }
      INFO(name, " ", cadence_name(cad));
      CHECK(wrong == 0);
      CHECK(known > 0);
      if (std::string(name) != "flat") CHECK(seen.size() == 8);
    }
  }
  Scenario tp = scenario("temporal-phase");
  const auto annual = default_modality_set(Cadence::Annual, 1, 8);
  const auto p = gen_plot(1, tp, annual);
  CHECK_THROWS_AS(decode_pixel(tp, p, find_spec(annual, "s2"), 0, 0), ConfigError);
}

TEST_CASE("temporal-phase: annual means coincide, seasonal profiles follow the generator") {
  const Scenario& sc = scenario("temporal-phase");
  const auto specs = default_modality_set(Cadence::Seasonal, 1, 32);
  // class -> band -> (sum of annual means, count), and class -> step -> band-0 sum
  std::array<std::array<double, 10>, 8> mean_sum{};
  std::array<std::array<double, 4>, 8> prof{};
  std::array<double, 8> n{};
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto p = gen_plot(seed, sc, specs);
    const Tensor& x = p.modalities.at("s2");
    for (std::size_t px = 0; px < 32 * 32; ++px) {
      const ClassId c = p.labels.pixels[px];
      if (c == ClassId::Unknown) continue;
      const auto k = static_cast<std::size_t>(c);
      n[k] += 1;
      for (std::size_t b = 0; b < 10; ++b) {
        double s = 0;
        for (std::size_t t = 0; t < 4; ++t) s += x[(t * 1024 + px) * 10 + b];
        mean_sum[k][b] += s / 4.0;
      }
      for (std::size_t t = 0; t < 4; ++t) prof[k][t] += x[(t * 1024 + px) * 10];
    }
  }
  // Oracle: seasonal step t averages months 3t..3t+2 of 0.5 + cos(2 pi m / 12 - phi).
  const double phi[3] = {0.0, 2 * std::numbers::pi / 3, 4 * std::numbers::pi / 3};
  for (std::size_t k = 0; k < 8; ++k) REQUIRE(n[k] > 200);
  double max_gap = 0.0;
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = a + 1; b < 8; ++b)
      for (std::size_t band = 0; band < 10; ++band)
        max_gap = std::max(max_gap, std::abs(mean_sum[a][band] / n[a] - mean_sum[b][band] / n[b]));
  CHECK(max_gap < sc.noise / 4);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t t = 0; t < 4; ++t) {
      double want = 0.5;
      for (int m = 0; m < 3; ++m) want += std::cos(2 * std::numbers::pi * (3.0 * t + m) / 12.0 - phi[k]) / 3.0;
      CHECK(std::abs(prof[k][t] / n[k] - want) < 0.03);
    }
  }
  double profile_gap = 0.0;
  for (std::size_t t = 0; t < 4; ++t) profile_gap = std::max(profile_gap, std::abs(prof[0][t] / n[0] - prof[1][t] / n[1]));
  CHECK(profile_gap > sc.noise);
}

TEST_CASE("derive_modality averages and keeps the last years") {
  ModalitySpec m{"s2", TimeBasis::Cadenced, Cadence::Monthly, 24, 1, 1, 1, true};
  Tensor v(m.shape());
  for (std::size_t t = 0; t < 24; ++t) v[t] = static_cast<double>(t);
  const Tensor s = derive_modality(m, Cadence::Monthly, 2, v, Cadence::Seasonal, 1);
  CHECK(s.shape() == Shape{4, 1, 1, 1});
  CHECK(s[0] == 13.0);
  CHECK(s[3] == 22.0);
  const Tensor a = derive_modality(m, Cadence::Monthly, 2, v, Cadence::Annual, 2);
  CHECK(a.shape() == Shape{2, 1, 1, 1});
  CHECK(a[0] == 5.5);
  CHECK(a[1] == 17.5);
  CHECK_THROWS_AS(derive_modality(m, Cadence::Monthly, 2, v, Cadence::Monthly, 3), ConfigError);
  ModalitySpec seasonal{"s2", TimeBasis::Cadenced, Cadence::Seasonal, 4, 1, 1, 1, true};
  CHECK_THROWS_AS(derive_modality(seasonal, Cadence::Seasonal, 1, Tensor(seasonal.shape()), Cadence::Monthly, 1),
                  ConfigError);

  ModalitySpec clim{"climate", TimeBasis::Monthly, Cadence::Monthly, 24, 1, 1, 1, false};
  const Tensor c = derive_modality(clim, Cadence::Monthly, 2, v, Cadence::Annual, 1);
  CHECK(c.shape() == Shape{12, 1, 1, 1});
  CHECK(c[0] == 12.0);
}

TEST_CASE("generating seasonal matches deriving it from monthly") {
  const auto monthly = default_modality_set(Cadence::Monthly, 2, 8);
  const auto seasonal = default_modality_set(Cadence::Seasonal, 2, 8);
  const auto pm = gen_plot(9, scenario("temporal-phase"), monthly);
  const auto ps = gen_plot(9, scenario("temporal-phase"), seasonal);
  const Tensor d = derive_modality(find_spec(monthly, "s2"), Cadence::Monthly, 2, pm.modalities.at("s2"),
                                   Cadence::Seasonal, 2);
  const Tensor& g = ps.modalities.at("s2");
  REQUIRE(d.shape() == g.shape());
  double worst = 0;
  for (std::size_t i = 0; i < d.numel(); ++i) worst = std::max(worst, std::abs(d[i] - g[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("gen_dataset places plots and assigns splits by block") {
  DatasetOptions o;
  o.n_plots = 30;
  o.seed = 4;
  o.s2_grid = 8;
  const auto ds = gen_dataset(o);
  CHECK(ds.plots.size() == 30);
  std::set<forest::sampling::Split> splits;
  for (const auto& p : ds.plots) {
    CHECK(ds.splits.at(forest::sampling::block_of(p.location)) == p.split);
    splits.insert(p.split);
  }
  CHECK(splits.size() == 3);
  CHECK(ds.splits.size() == 10);
  std::array<int, 3> blocks{};
  for (const auto& [b, s] : ds.splits) ++blocks[static_cast<int>(s)];
  CHECK(blocks == std::array<int, 3>{8, 1, 1});

  const auto again = gen_dataset(o);
  for (std::size_t i = 0; i < ds.plots.size(); ++i) {
    CHECK(ds.plots[i].id == again.plots[i].id);
    CHECK(ds.plots[i].location.x == again.plots[i].location.x);
    CHECK(ds.plots[i].labels.pixels == again.plots[i].labels.pixels);
  }
  o.n_plots = 2;
  CHECK_THROWS_AS(gen_dataset(o), std::invalid_argument);
  o.n_plots = 5;
  o.modalities = {"s1"};
  CHECK_THROWS_AS(gen_dataset(o), ConfigError);
}

TEST_CASE("source stacks are valid and produce a mix of classes") {
  const auto s = gen_source_stack(3, 32, 32);
  CHECK_NOTHROW(s.validate());
  const auto out = forest::labels::fuse_stack(s);
  std::set<ClassId> seen(out.pixels.begin(), out.pixels.end());
  CHECK(seen.size() >= 4);
}

TEST_CASE("easy landscape is coarser than the other scenarios") {
  CHECK(scenario("easy").landscape_cycles < scenario("temporal-phase").landscape_cycles);
  auto mixed_share = [](const std::string& name) {
    DatasetOptions o;
    o.scenario = name;
    o.n_plots = 8;
    o.seed = 1;
    o.s2_grid = 32;
    o.modalities = {"s2"};
    std::size_t mixed = 0, total = 0;
    for (const auto& p : gen_dataset(o).plots)
      for (std::size_t i = 0; i < 32; i += 2)
        for (std::size_t j = 0; j < 32; j += 2) {
          std::set<ClassId> seen;
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              if (p.labels.at(i + a, j + b) != ClassId::Unknown) seen.insert(p.labels.at(i + a, j + b));
          mixed += seen.size() > 1;
          ++total;
        }
    return static_cast<double>(mixed) / static_cast<double>(total);
  };
  CHECK(mixed_share("easy") < 0.5 * mixed_share("temporal-phase"));
}
