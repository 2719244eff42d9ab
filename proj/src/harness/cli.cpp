#include "forest/harness/cli.hpp"

#include <fstream>

#include "CLI11.hpp"
#include "forest/harness/runner.hpp"
#include "forest/numerics/rng.hpp"

namespace forest::harness {

using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    std::string item = s.substr(start, p == std::string::npos ? std::string::npos : p - start);
    if (!item.empty()) out.push_back(item);
    if (p == std::string::npos) break;
    start = p + 1;
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

labels::ClassId class_from_short(const std::string& s) {
  for (std::uint8_t c = 0; c < labels::kNumClasses; ++c)
    if (labels::class_short_name(static_cast<labels::ClassId>(c)) == s) return static_cast<labels::ClassId>(c);
  throw num::ConfigError("unknown class '" + s + "' (use N, P, TC, OV, W, I, BG, BA)");
}

// Label rasters under a path: a dataset root, or a directory written by `fuse`.
std::vector<std::pair<std::string, labels::LabelRaster>> collect_labels(const fs::path& root) {
  std::vector<std::pair<std::string, labels::LabelRaster>> out;
  if (fs::exists(root / "dataset.json")) {
    for (const auto& e : read_dataset_index(root).plots)
      out.emplace_back(e.id, read_plot(plot_dir(root, e.id)).labels);
    return out;
  }
  std::vector<fs::path> dirs;
  for (const auto& d : fs::directory_iterator(root))
    if (fs::exists(d.path() / "labels.json")) dirs.push_back(d.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    std::ifstream f(d / "labels.json");
    const json j = json::parse(f);
    out.emplace_back(d.filename().string(),
                     read_labels(d / "labels.u8", j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>()));
  }
  if (out.empty()) throw std::runtime_error(root.string() + " holds neither a dataset nor fused label rasters");
  return out;
}

RunConfig build_config(const std::string& path, const std::vector<std::string>& sets, const std::optional<std::uint64_t>& seed) {
  RunConfig c = path.empty() ? RunConfig{} : load_run_config(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw num::ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) c.seeds = {*seed};
  c.validate();
  return c;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Forest typology benchmarking toolkit", "forestbench"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  datagen::DatasetOptions go;
  std::string gen_out, gen_cadence = "seasonal", gen_modalities;
  bool gen_sources = false;
  gen->add_option("--scenario", go.scenario, "Scenario name")->capture_default_str();
  gen->add_option("--plots", go.n_plots, "Number of plots")->capture_default_str();
  gen->add_option("--seed", go.seed, "Master seed")->capture_default_str();
  gen->add_option("--cadence", gen_cadence, "annual | seasonal | monthly")->capture_default_str();
  gen->add_option("--years", go.years, "Years of observations (1-3)")->capture_default_str();
  gen->add_option("--grid", go.s2_grid, "Sentinel-2 grid side in pixels")->capture_default_str();
  gen->add_option("--modalities", gen_modalities, "Comma list (default s2,s1,climate,elevation)");
  gen->add_flag("--sources", gen_sources, "Also write a synthetic evidence stack per plot");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse evidence stacks into reference labels");
  std::vector<std::string> fuse_in;
  std::string fuse_out;
  fuse->add_option("stacks", fuse_in, "Stack directories, or directories of stacks")->required();
  fuse->add_option("--out", fuse_out, "Output directory")->required();

  // sample
  auto* sample = app.add_subcommand("sample", "Stratified plot selection and block splits");
  std::string sample_in, sample_fractions, sample_out;
  std::size_t sample_count = 0;
  std::uint64_t sample_seed = 0;
  sample->add_option("dataset", sample_in, "Dataset root")->required();
  sample->add_option("--count", sample_count, "Plots to select")->required();
  sample->add_option("--fractions", sample_fractions, "Dominant-class fractions, e.g. N=0.13,P=0.10")->required();
  sample->add_option("--seed", sample_seed, "Seed")->capture_default_str();
  sample->add_option("--out", sample_out, "Output directory");

  // stats
  auto* stats = app.add_subcommand("stats", "Label statistics of a dataset or fused rasters");
  std::string stats_in, stats_out;
  stats->add_option("path", stats_in, "Dataset root or fuse output")->required();
  stats->add_option("--out", stats_out, "Write stats.json and stats.csv here");

  // train / ablations share config handling
  struct RunOpts {
    std::string config, out;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
  };
  auto add_run_opts = [](CLI::App* s, RunOpts& o) {
    s->add_option("--config", o.config, "key = value config file");
    s->add_option("--set", o.sets, "Override one config key (key=value), repeatable");
    s->add_option("--seed", o.seed, "Train with this single seed");
    s->add_option("--out", o.out, "Output directory");
  };
  auto* train = app.add_subcommand("train", "Train and evaluate, one model per seed");
  RunOpts to;
  bool final_protocol = false;
  add_run_opts(train, to);
  train->add_flag("--final", final_protocol, "Train on train+val (final evaluation protocol)");

  auto* eval = app.add_subcommand("eval", "Evaluate saved checkpoints");
  std::vector<std::string> eval_ckpts;
  std::string eval_dataset, eval_split, eval_out;
  std::size_t eval_threads = 0;
  eval->add_option("--checkpoint", eval_ckpts, "Checkpoint file, repeatable")->required();
  eval->add_option("--dataset", eval_dataset, "Dataset root (default: as trained)");
  eval->add_option("--split", eval_split, "test | val | train | all (default: as trained)");
  eval->add_option("--threads", eval_threads, "Evaluation threads, 0 = all cores");
  eval->add_option("--out", eval_out, "Write report.json here");

  auto* abm = app.add_subcommand("ablate-modality", "One run per modality combination");
  RunOpts mo;
  std::vector<std::string> combos;
  add_run_opts(abm, mo);
  abm->add_option("--combo", combos, "Comma list of modalities, repeatable")->required();

  auto* abt = app.add_subcommand("ablate-temporal", "One run per (cadence, years) cell");
  RunOpts tmo;
  std::string cadences = "annual,seasonal,monthly", years = "1";
  add_run_opts(abt, tmo);
  abt->add_option("--cadences", cadences, "Comma list")->capture_default_str();
  abt->add_option("--years", years, "Comma list")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "forestbench: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    json summary;
    if (*gen) {
      go.cadence = datagen::cadence_from_name(gen_cadence);
      if (!gen_modalities.empty()) go.modalities = split(gen_modalities, ',');
      const auto ds = datagen::gen_dataset(go);
      write_dataset(gen_out, ds);
      if (gen_sources)
        for (std::size_t i = 0; i < ds.plots.size(); ++i)
          write_source_stack(fs::path(gen_out) / "sources" / ds.plots[i].id,
                             datagen::gen_source_stack(num::derive_seed(go.seed ^ 0x736f75726365, i), go.s2_grid,
                                                       go.s2_grid));
      summary = {{"command", "gen"}, {"dataset", read_dataset_index(gen_out).describe()}, {"sources", gen_sources}};
    } else if (*fuse) {
      std::vector<fs::path> stacks;
      for (const auto& in : fuse_in) {
        if (fs::exists(fs::path(in) / "stack.json")) {
          stacks.emplace_back(in);
          continue;
        }
        std::vector<fs::path> inner;
        for (const auto& d : fs::directory_iterator(in))
          if (fs::exists(d.path() / "stack.json")) inner.push_back(d.path());
        if (inner.empty()) throw std::runtime_error(in + " contains no evidence stacks");
        std::sort(inner.begin(), inner.end());
        stacks.insert(stacks.end(), inner.begin(), inner.end());
      }
      std::vector<labels::LabelRaster> fused;
      for (const auto& s : stacks) {
        const auto r = labels::fuse_stack(read_source_stack(s));
        const fs::path dir = fs::path(fuse_out) / s.filename();
        fs::create_directories(dir);
        write_labels(dir / "labels.u8", r);
        write_file(dir / "labels.json", json{{"height", r.height}, {"width", r.width}}.dump() + "\n");
        fused.push_back(r);
      }
      summary = {{"command", "fuse"}, {"stacks", stacks.size()}, {"stats", labels::stats_to_json(labels::dataset_stats(fused))}};
    } else if (*sample) {
      const auto idx = read_dataset_index(sample_in);
      std::vector<sampling::PoolPlot> pool;
      std::map<std::string, sampling::PlotLocation> where;
      for (const auto& e : idx.plots) {
        pool.push_back({e.id, labels::image_stats(read_plot(plot_dir(sample_in, e.id)).labels).dominant});
        where[e.id] = e.location;
      }
      std::map<labels::ClassId, double> fractions;
      for (const auto& kv : split(sample_fractions, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw num::ConfigError("--fractions expects CLASS=fraction, got '" + kv + "'");
        fractions[class_from_short(kv.substr(0, eq))] = std::stod(kv.substr(eq + 1));
      }
      const auto targets = sampling::targets_from_fractions(fractions, sample_count);
      const auto chosen = sampling::stratified_sample(pool, targets, sample_seed);
      std::vector<sampling::BlockId> blocks;
      for (const auto& id : chosen) blocks.push_back(sampling::block_of(where.at(id)));
      const auto splits = sampling::assign_splits(blocks, sample_seed);
      json realized = json::object(), per_split = {{"train", 0}, {"val", 0}, {"test", 0}};
      std::map<std::string, labels::ClassId> dom;
      for (const auto& p : pool) dom[p.id] = p.dominant;
      std::string csv = "id,dominant,split\n";
      for (const auto& id : chosen) {
        const std::string cls(labels::class_short_name(dom.at(id)));
        realized[cls] = realized.value(cls, 0) + 1;
        const std::string sp(sampling::split_name(splits.at(sampling::block_of(where.at(id)))));
        per_split[sp] = per_split[sp].get<int>() + 1;
        csv += id + "," + cls + "," + sp + "\n";
      }
      json tj = json::object();
      for (const auto& [c, n] : targets) tj[std::string(labels::class_short_name(c))] = n;
      summary = {{"command", "sample"}, {"selected", chosen.size()}, {"targets", tj},
                 {"realized", realized}, {"plots_per_split", per_split}, {"blocks", splits.size()}};
      if (!sample_out.empty()) {
        fs::create_directories(sample_out);
        write_file(fs::path(sample_out) / "selection.csv", csv);
        write_file(fs::path(sample_out) / "splits.csv", sampling::split_manifest_csv(splits));
      }
    } else if (*stats) {
      const auto rasters = collect_labels(stats_in);
      std::vector<labels::LabelRaster> rs;
      for (const auto& [id, r] : rasters) rs.push_back(r);
      const auto rep = labels::dataset_stats(rs);
      summary = {{"command", "stats"}, {"images", rs.size()}, {"stats", labels::stats_to_json(rep)}};
      if (!stats_out.empty()) {
        fs::create_directories(stats_out);
        write_file(fs::path(stats_out) / "stats.json", labels::stats_to_json(rep).dump(2) + "\n");
        write_file(fs::path(stats_out) / "stats.csv", labels::stats_to_csv(rep));
      }
    } else if (*train) {
      RunConfig c = build_config(to.config, to.sets, to.seed);
      if (final_protocol) c.train_on = "train+val";
      const auto r = run_train(c, to.out.empty() ? std::nullopt : std::optional<fs::path>(to.out));
      summary = r.summary;
      summary["command"] = "train";
    } else if (*eval) {
      std::vector<fs::path> ck(eval_ckpts.begin(), eval_ckpts.end());
      const auto r = run_eval(ck, eval_dataset.empty() ? std::nullopt : std::optional(eval_dataset),
                              eval_split.empty() ? std::nullopt : std::optional(eval_split), eval_threads);
      summary = r.summary;
      summary["command"] = "eval";
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        write_file(fs::path(eval_out) / "report.json", summary.dump(2) + "\n");
      }
    } else if (*abm) {
      const RunConfig c = build_config(mo.config, mo.sets, mo.seed);
      std::vector<std::vector<std::string>> cs;
      for (const auto& s : combos) cs.push_back(split(s, ','));
      const auto a = ablate_modality(c, cs, mo.out.empty() ? std::nullopt : std::optional<fs::path>(mo.out));
      summary = a.summary;
      summary["command"] = "ablate-modality";
      summary["csv"] = a.csv;
    } else if (*abt) {
      const RunConfig c = build_config(tmo.config, tmo.sets, tmo.seed);
      std::vector<datagen::Cadence> cads;
      for (const auto& s : split(cadences, ',')) cads.push_back(datagen::cadence_from_name(s));
      std::vector<int> ys;
      for (const auto& s : split(years, ',')) ys.push_back(std::stoi(s));
      const auto a = ablate_temporal(c, cads, ys, tmo.out.empty() ? std::nullopt : std::optional<fs::path>(tmo.out));
      summary = a.summary;
      summary["command"] = "ablate-temporal";
      summary["csv"] = a.csv;
    }
    out << summary.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "forestbench: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace forest::harness
