// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"
#include "forest/datagen.hpp"
#include "forest/harness/cli.hpp"
#include "forest/harness/plot_io.hpp"
#include "forest/harness/runner.hpp"
#include "forest/labelfuse.hpp"
#include "forest/metrics.hpp"
#include "forest/mtsvit/model.hpp"
#include "forest/numerics/gradcheck.hpp"
#include "forest/numerics/ops.hpp"
#include "forest/numerics/rng.hpp"
#include "forest/sampler.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace forest;
using labels::ClassId;
using labels::LandCover;
using num::CounterRng;
using num::Tensor;

namespace {

// Pinned thresholds.
constexpr std::size_t kFusionPixels = 100000;
constexpr double kFusionSeconds = 5.0;
constexpr std::size_t kSplitBlocks = 1000;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-4;
constexpr std::size_t kGradProbes = 300;
constexpr double kGradSeconds = 60.0;
constexpr double kKeyBiasGradBound = 1e-15;
constexpr int kPaddingPairs = 20;
constexpr std::size_t kOverfitSteps = 200;
constexpr double kOverfitMacroF1 = 0.95;
constexpr double kOverfitSeconds = 300.0;
constexpr double kTemporalGap = 0.2;
constexpr double kTemporalSeconds = 1800.0;
constexpr double kDecoderGap = 0.05;
constexpr int kMetricRasters = 100;
constexpr std::size_t kStatsPlots = 100;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

fs::path g_work;

fs::path workdir(const std::string& name) {
  const fs::path p = g_work / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---- 1, 2: label fusion ----------------------------------------------------

Outcome fusion_oracle() {
  CounterRng rng(20240601);
  labels::SourceStack s(1, kFusionPixels);
  for (std::size_t p = 0; p < kFusionPixels; ++p) {
    s.natural_evidence[p] = rng.uniform() < 0.3;
    s.planted_evidence[p] = rng.uniform() < 0.3;
    s.treecrop_evidence[p] = rng.uniform() < 0.3;
    s.land_cover[p] = static_cast<LandCover>(rng.below(labels::kNumLandCover));
    s.sbtn_vegetation[p] = rng.uniform() < 0.5;
    const double r = rng.uniform();
    s.tree_height[p] = r < 0.1 ? 5.0 : r < 0.2 ? 0.0 : 10.0 * rng.uniform();
    s.deforested[p] = rng.uniform() < 0.5;
    s.regrowth_confident[p] = rng.uniform() < 0.5;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = labels::fuse_stack(s);
  std::size_t mismatches = 0;
  for (std::size_t p = 0; p < kFusionPixels; ++p)
    mismatches += out.pixels[p] != oracle::label_table(s.natural_evidence[p], s.planted_evidence[p],
                                                       s.treecrop_evidence[p], s.land_cover[p], s.sbtn_vegetation[p],
                                                       s.tree_height[p], s.deforested[p], s.regrowth_confident[p]);
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kFusionSeconds,
          std::to_string(mismatches) + " mismatches in " + std::to_string(kFusionPixels) + " pixels, " +
              fmt(secs, 2) + " s"};
}

Outcome consensus_table() {
  // expected multiset: undecided, N, P, TC once each, Unknown four times
  std::map<std::string, int> got;
  bool rule_ok = true;
  for (int m = 0; m < 8; ++m) {
    const bool n = m & 1, p = (m >> 1) & 1, tc = (m >> 2) & 1;
    const auto d = labels::fuse_forest(n, p, tc);
    const int votes = n + p + tc;
    std::string key = !d ? "undecided" : std::string(labels::class_short_name(*d));
    ++got[key];
    if (votes == 0) rule_ok = rule_ok && !d;
    if (votes == 1) rule_ok = rule_ok && d && *d == (n ? ClassId::NaturalForest : p ? ClassId::PlantedForest : ClassId::TreeCrops);
    if (votes >= 2) rule_ok = rule_ok && d && *d == ClassId::Unknown;
  }
  const std::map<std::string, int> want{{"undecided", 1},
                                        {std::string(labels::class_short_name(ClassId::NaturalForest)), 1},
                                        {std::string(labels::class_short_name(ClassId::PlantedForest)), 1},
                                        {std::string(labels::class_short_name(ClassId::TreeCrops)), 1},
                                        {std::string(labels::class_short_name(ClassId::Unknown)), 4}};
  std::string detail;
  for (const auto& [k, v] : got) detail += (detail.empty() ? "" : ", ") + k + "x" + std::to_string(v);
  return {rule_ok && got == want, detail};
}

// ---- 3: splits ------------------------------------------------------------------

Outcome split_integrity() {
  // 40 x 25 blocks, three plots at random positions inside each
  CounterRng rng(77);
  std::vector<sampling::PlotLocation> plots;
  for (int bx = -20; bx < 20; ++bx)
    for (int by = -12; by < 13; ++by)
      for (int k = 0; k < 3; ++k)
        plots.push_back({(bx + rng.uniform()) * sampling::kBlockSizeM, (by + rng.uniform()) * sampling::kBlockSizeM});
  std::vector<sampling::BlockId> blocks;
  for (const auto& p : plots) blocks.push_back(sampling::block_of(p));
  const auto a = sampling::assign_splits(blocks, 5);
  const auto b = sampling::assign_splits(blocks, 5);
  std::size_t tr = 0, va = 0, te = 0;
  for (const auto& [blk, s] : a) (s == sampling::Split::Train ? tr : s == sampling::Split::Val ? va : te)++;
  std::map<sampling::BlockId, std::set<sampling::Split>> seen;
  for (const auto& p : plots) seen[sampling::block_of(p)].insert(a.at(sampling::block_of(p)));
  std::size_t shared = 0;
  for (const auto& [blk, s] : seen) shared += s.size() > 1;
  const bool ok = a.size() == kSplitBlocks && tr == 800 && va == 100 && te == 100 && shared == 0 && a == b;
  return {ok, std::to_string(a.size()) + " blocks -> " + std::to_string(tr) + "/" + std::to_string(va) + "/" +
                  std::to_string(te) + ", " + std::to_string(shared) + " blocks split across sets, rerun " +
                  (a == b ? "identical" : "differs")};
}

// ---- 4, 5, 6: model properties ----------------------------------------------------

mtsvit::ModelConfig tiny_model() {
  mtsvit::ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.num_classes = 3;
  c.mlp_ratio = 2;
  c.modalities = {{"s2", 2, 8, 8, 3, true, {1, 2, 2}}, {"elevation", 1, 4, 4, 2, true, {1, 2, 2}}};
  return c;
}

std::map<std::string, Tensor> random_inputs(const mtsvit::ModelConfig& c, std::uint64_t seed) {
  std::map<std::string, Tensor> in;
  for (const auto& m : c.modalities) {
    Tensor t(num::Shape{m.timesteps, m.height, m.width, m.channels});
    CounterRng rng(seed++);
    for (auto& v : t.values()) v = rng.normal();
    in.emplace(m.name, std::move(t));
  }
  return in;
}

void scramble(mtsvit::ModelParams& p, std::uint64_t seed, double sigma) {
  CounterRng rng(seed);
  for (auto* q : p.all())
    for (auto& v : q->mutable_value().values()) v += sigma * rng.normal();
}

Outcome gradient_check() {
  const auto c = tiny_model();
  auto p = mtsvit::init_params(c, 31);
  scramble(p, 32, 0.2);
  const auto in = random_inputs(c, 80);
  const std::size_t n = 8 * 8;
  std::vector<int> targets(n);
  CounterRng rng(33);
  for (auto& t : targets) t = rng.uniform() < 0.1 ? 255 : static_cast<int>(rng.below(3));
  auto loss = [&] {
    return num::cross_entropy(num::reshape(mtsvit::forward(in, c, p), {n, 3}), targets, 255);
  };
  const auto t0 = std::chrono::steady_clock::now();
  // Attention key biases have an identically zero gradient (softmax shift invariance);
  // their central difference is round-off over a zero denominator, so they are bounded apart.
  std::vector<num::Parameter*> probed;
  for (auto* q : p.all())
    if (!q->name().ends_with(".bk")) probed.push_back(q);
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed : {1, 7}) {
    const auto r = num::grad_check(loss, probed, kGradProbes, kGradStep, seed);
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      where = r.worst_parameter;
    }
  }
  p.zero_grad();
  loss().backward();
  double bk = 0.0;
  for (auto* q : p.all())
    if (q->name().ends_with(".bk")) {
      const Tensor g = q->grad();
      for (double v : g.values()) bk = std::max(bk, std::abs(v));
    }
  const double secs = seconds_since(t0);
  const bool ok = worst < kGradTolerance && bk < kKeyBiasGradBound && secs < kGradSeconds;
  std::ostringstream os;
  os << "max relative error " << worst << " (" << where << ") over " << 2 * kGradProbes << " probes, key-bias |grad| "
     << bk << ", " << fmt(secs, 1) << " s";
  return {ok, os.str()};
}

Outcome padding_invariance() {
  auto c = tiny_model();
  c.modalities.push_back({"climate", 3, 1, 1, 2, false, {1, 1, 1}});
  auto p = mtsvit::init_params(c, 14);
  scramble(p, 15, 0.3);
  num::NoGradGuard ng;
  CounterRng rng(99);
  double max_diff = 0.0;
  for (int pair = 0; pair < kPaddingPairs; ++pair) {
    const auto in = random_inputs(c, 1000 + 10 * pair);
    mtsvit::ForwardHooks a, b;
    a.pad_fill = 200.0 * rng.uniform() - 100.0;
    b.pad_fill = 200.0 * rng.uniform() - 100.0;
    const Tensor x = mtsvit::forward(in, c, p, a).value(), y = mtsvit::forward(in, c, p, b).value();
    for (std::size_t i = 0; i < x.numel(); ++i) max_diff = std::max(max_diff, std::abs(x[i] - y[i]));
  }
  return {max_diff == 0.0, std::to_string(kPaddingPairs) + " pairs, max |diff| " + fmt(max_diff, 1)};
}

Outcome class_isolation() {
  auto c = tiny_model();
  c.modalities.push_back({"climate", 3, 1, 1, 2, false, {1, 1, 1}});
  auto p = mtsvit::init_params(c, 21);
  scramble(p, 22, 0.3);
  const auto in = random_inputs(c, 50);
  num::NoGradGuard ng;
  const Tensor before = mtsvit::forward(in, c, p).value();
  double other = 0.0;
  bool moved_all = true;
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    mtsvit::ModelParams q = mtsvit::init_params(c, 21);
    scramble(q, 22, 0.3);
    for (std::size_t d = 0; d < c.d; ++d) q.get("class_queries").mutable_value()[k * c.d + d] += 0.3;
    const Tensor after = mtsvit::forward(in, c, q).value();
    bool moved = false;
    for (std::size_t i = 0; i < before.numel(); ++i) {
      if (i % c.num_classes == k) moved = moved || before[i] != after[i];
      else other = std::max(other, std::abs(before[i] - after[i]));
    }
    moved_all = moved_all && moved;
  }
  return {other == 0.0 && moved_all,
          "max diff on other channels " + fmt(other, 1) + ", perturbed channel moved: " + (moved_all ? "yes" : "no")};
}

// ---- 7, 8, 9: training ----------------------------------------------------------

harness::RunConfig desk_run(const fs::path& root) {
  harness::RunConfig c;
  c.dataset = root.string();
  c.d = 16;
  c.heads = 2;
  c.layers = 2;
  c.batch_size = 4;
  c.lr = 5e-3;
  c.init = "fan_in";
  c.threads = 1;
  return c;
}

Outcome overfit() {
  datagen::DatasetOptions o;
  o.scenario = "easy";
  o.n_plots = 8;
  o.seed = 1;
  o.s2_grid = 32;
  const fs::path root = workdir("overfit");
  harness::write_dataset(root, datagen::gen_dataset(o));
  auto c = desk_run(root);
  c.modalities = {"s2"};
  c.train_on = "all";
  c.eval_on = "all";
  c.epochs = 1000;
  c.max_steps = kOverfitSteps;
  c.seeds = {0};
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = harness::run_train(c);
  const double secs = seconds_since(t0);
  const double f1 = r.report.seeds[0].overall_f1;
  const std::size_t steps = r.seeds[0].stats.steps;
  return {f1 >= kOverfitMacroF1 && steps <= kOverfitSteps && r.summary["eval_plots"] == 8 && secs < kOverfitSeconds,
          "training macro-F1 " + fmt(f1) + " after " + std::to_string(steps) + " steps on 8 plots, " + fmt(secs, 1) +
              " s"};
}

// 160 plots over 40 blocks of four: the block quota gives 128/16/16 plots.
fs::path split_dataset(const std::string& scenario, const std::string& name) {
  datagen::DatasetOptions o;
  o.scenario = scenario;
  o.n_plots = 160;
  o.seed = 11;
  o.s2_grid = 16;
  o.cadence = datagen::Cadence::Seasonal;
  const fs::path root = workdir(name);
  harness::write_dataset(root, datagen::gen_dataset(o));
  return root;
}

std::string per_seed(const metrics::MetricReport& r) {
  std::string s;
  for (const auto& m : r.seeds) s += (s.empty() ? "" : " ") + fmt(m.forest_f1, 3);
  return s;
}

Outcome temporal_direction() {
  const fs::path root = split_dataset("temporal-phase", "temporal");
  auto c = desk_run(root);
  c.modalities = {"s2"};
  c.epochs = 20;
  c.train_limit = 64;
  c.eval_limit = 16;
  c.seeds = {0, 1, 2};
  const auto t0 = std::chrono::steady_clock::now();
  c.cadence = datagen::Cadence::Seasonal;
  const auto seasonal = harness::run_train(c);
  c.cadence = datagen::Cadence::Annual;
  const auto annual = harness::run_train(c);
  const double secs = seconds_since(t0);
  const double gap = seasonal.report.forest_f1.mean - annual.report.forest_f1.mean;
  const bool sizes = seasonal.summary["eval_plots"] == 16 && annual.summary["eval_plots"] == 16;
  return {gap >= kTemporalGap && sizes && secs < kTemporalSeconds,
          "test forest-F1 seasonal " + fmt(seasonal.report.forest_f1.mean) + " [" + per_seed(seasonal.report) +
              "] vs annual " + fmt(annual.report.forest_f1.mean) + " [" + per_seed(annual.report) + "], gap " +
              fmt(gap) + ", 64 train / 16 test plots, " + fmt(secs, 1) + " s"};
}

Outcome decoder_benefit() {
  const fs::path root = split_dataset("modal-fusion", "fusion");
  auto c = desk_run(root);
  c.modalities = {"s2", "climate", "elevation"};
  c.epochs = 20;
  c.train_limit = 64;
  c.eval_limit = 16;
  c.seeds = {0, 1, 2};
  const auto t0 = std::chrono::steady_clock::now();
  c.decoder = "on";
  const auto on = harness::run_train(c);
  c.decoder = "off";
  const auto off = harness::run_train(c);
  const double secs = seconds_since(t0);
  const double gap = on.report.forest_f1.mean - off.report.forest_f1.mean;
  return {gap >= kDecoderGap, "test forest-F1 decoder on " + fmt(on.report.forest_f1.mean) + " [" +
                                  per_seed(on.report) + "] vs off " + fmt(off.report.forest_f1.mean) + " [" +
                                  per_seed(off.report) + "], gap " + fmt(gap) + ", " + fmt(secs, 1) + " s"};
}

// ---- 10, 11: metrics and statistics ---------------------------------------------

Outcome metrics_oracle() {
  CounterRng rng(4);
  std::size_t bad = 0;
  for (int trial = 0; trial < kMetricRasters; ++trial) {
    const std::size_t h = 1 + rng.below(16), w = 1 + rng.below(16);
    std::vector<std::uint8_t> pred(h * w), truth(h * w);
    labels::LabelRaster P(h, w), T(h, w);
    for (std::size_t i = 0; i < h * w; ++i) {
      pred[i] = static_cast<std::uint8_t>(rng.below(8));
      truth[i] = rng.uniform() < 0.1 ? 255 : static_cast<std::uint8_t>(rng.below(8));
      P.pixels[i] = static_cast<ClassId>(pred[i]);
      T.pixels[i] = static_cast<ClassId>(truth[i]);
    }
    metrics::ConfusionMatrix cm;
    metrics::accumulate(cm, P, T);
    const auto m = metrics::seed_metrics(cm);
    // per-pixel brute force: tp, fp, fn counted straight from the rasters
    double macro = 0.0, forest = 0.0;
    for (std::uint8_t k = 0; k < 8; ++k) {
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < h * w; ++i) {
        if (truth[i] == 255) continue;
        tp += pred[i] == k && truth[i] == k;
        fp += pred[i] == k && truth[i] != k;
        fn += pred[i] != k && truth[i] == k;
      }
      const double f = (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
      bad += m.f1[k] != f;
      macro += f;
      if (k < 3) forest += f;
    }
    bad += m.overall_f1 != macro / 8.0;
    bad += m.forest_f1 != forest / 3.0;
  }
  return {bad == 0, std::to_string(kMetricRasters) + " rasters, " + std::to_string(bad) + " mismatching values"};
}

Outcome stats_reproduction() {
  std::vector<labels::LabelRaster> rasters;
  for (std::uint64_t i = 0; i < kStatsPlots; ++i)
    rasters.push_back(labels::fuse_stack(datagen::gen_source_stack(i, 32, 32)));
  const auto rep = labels::dataset_stats(rasters);
  const auto want = oracle::recount(rasters);
  std::size_t bad = 0;
  for (std::size_t k = 0; k < 9; ++k)
    bad += (rep.pixel_counts[k] != want.pixels[k]) + (rep.distinct_histogram[k] != want.distinct[k]) +
           (rep.dominant_counts[k] != want.dominant[k]);

  // pool of fused synthetic plots; 100 selected with the 13/10/7/17 % dominant-class vector
  std::vector<sampling::PoolPlot> pool;
  std::map<std::string, labels::LabelRaster> by_id;
  for (std::uint64_t i = 0; i < 600; ++i) {
    auto r = labels::fuse_stack(datagen::gen_source_stack(1000 + i, 24, 24));
    const std::string id = "plot_" + std::to_string(i);
    pool.push_back({id, labels::image_stats(r).dominant});
    by_id.emplace(id, std::move(r));
  }
  const std::map<ClassId, double> fractions{{ClassId::NaturalForest, 0.13},
                                            {ClassId::PlantedForest, 0.10},
                                            {ClassId::TreeCrops, 0.07},
                                            {ClassId::OtherVegetation, 0.17}};
  const auto targets = sampling::targets_from_fractions(fractions, 100);
  const auto chosen = sampling::stratified_sample(pool, targets, 3);
  std::vector<labels::LabelRaster> sel;
  for (const auto& id : chosen) sel.push_back(by_id.at(id));
  const auto got = oracle::recount(sel);
  const bool realized = got.dominant[0] == 13 && got.dominant[1] == 10 && got.dominant[2] == 7 &&
                        got.dominant[3] == 17 && chosen.size() == 47 &&
                        std::set<std::string>(chosen.begin(), chosen.end()).size() == chosen.size();
  return {bad == 0 && realized, std::to_string(bad) + " histogram mismatches on " + std::to_string(kStatsPlots) +
                                    " plots; sampled dominant N/P/TC/OV = " + std::to_string(got.dominant[0]) + "/" +
                                    std::to_string(got.dominant[1]) + "/" + std::to_string(got.dominant[2]) + "/" +
                                    std::to_string(got.dominant[3]) + " of 100 (want 13/10/7/17)"};
}

// ---- 12: round trip and determinism ----------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string cli_json(std::vector<std::string> args, int& code) {
  args.insert(args.begin(), "forestbench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  code = harness::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return out.str();
}

Outcome round_trip() {
  datagen::DatasetOptions o;
  o.scenario = "modal-fusion";
  o.n_plots = 4;
  o.seed = 8;
  const auto ds = datagen::gen_dataset(o);
  const fs::path dir = workdir("roundtrip");
  std::size_t bad = 0;
  for (const auto& plot : ds.plots) {
    harness::write_plot(dir / "a" / plot.id, plot);
    const auto back = harness::read_plot(dir / "a" / plot.id);
    for (const auto& [name, t] : plot.modalities) {
      const Tensor& u = back.modalities.at(name);
      bad += u.shape() != t.shape() ||
             std::memcmp(u.values().data(), t.values().data(), t.numel() * sizeof(double)) != 0;
    }
    bad += back.labels.pixels != plot.labels.pixels;
    harness::write_plot(dir / "b" / plot.id, back);
    for (const auto& e : fs::directory_iterator(dir / "a" / plot.id))
      bad += slurp(e.path()) != slurp(dir / "b" / plot.id / e.path().filename());
  }

  std::vector<std::string> outs;
  bool codes_ok = true;
  for (const char* run : {"r1", "r2"}) {
    const fs::path base = workdir(std::string("cli_") + run);
    int code = 0;
    std::string all = cli_json({"gen", "--scenario", "modal-fusion", "--plots", "10", "--seed", "4", "--grid", "8",
                                "--out", (base / "ds").string()},
                               code);
    codes_ok = codes_ok && code == 0;
    all += cli_json({"train", "--set", "dataset=" + (base / "ds").string(), "--set", "d=8", "--set", "heads=2",
                     "--set", "layers=1", "--set", "epochs=2", "--set", "seeds=0,1", "--set", "threads=1", "--out",
                     (base / "run").string()},
                    code);
    codes_ok = codes_ok && code == 0;
    all += cli_json({"stats", (base / "ds").string()}, code);
    codes_ok = codes_ok && code == 0;
    outs.push_back(all);
  }
  const bool same = outs[0] == outs[1];
  return {bad == 0 && codes_ok && same, std::to_string(bad) + " plot round-trip differences; two seeded CLI runs " +
                                            (same ? "identical" : "differ") + " (" + std::to_string(outs[0].size()) +
                                            " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the forest typology toolkit"};
  std::vector<int> only;
  std::string work;
  bool keep = false;
  app.add_option("--only", only, "Run only these criteria (1-12)");
  app.add_option("--workdir", work, "Scratch directory (default: a fresh temp directory)");
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  g_work = work.empty() ? fs::temp_directory_path() / ("forestbench_acceptance_" + std::to_string(::getpid()))
                        : fs::path(work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"fusion oracle equivalence", fusion_oracle},
      {"forest consensus table", consensus_table},
      {"split integrity", split_integrity},
      {"gradient correctness", gradient_check},
      {"padding invariance", padding_invariance},
      {"class-stream isolation", class_isolation},
      {"overfit capacity", overfit},
      {"temporal directionality", temporal_direction},
      {"decoder benefit", decoder_benefit},
      {"metrics oracle", metrics_oracle},
      {"stats reproduction", stats_reproduction},
      {"round trip and determinism", round_trip},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  if (!keep && work.empty()) fs::remove_all(g_work);
  return failed == 0 ? 0 : 1;
}
