#include "forest/harness/runner.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

#include "forest/mtsvit/checkpoint.hpp"
#include "forest/numerics/ops.hpp"
#include "forest/numerics/optim.hpp"
#include "forest/numerics/rng.hpp"

namespace forest::harness {

using labels::ClassId;
using nlohmann::json;
using num::ConfigError;
using num::Tensor;
using num::Var;

namespace {

std::function<void(const std::string&)>& progress() {
  static std::function<void(const std::string&)> sink;
  return sink;
}

void say(const std::string& s) {
  if (progress()) progress()(s);
}

bool in_split(sampling::Split s, const std::string& which) {
  if (which == "all") return true;
  if (which == "train+val") return s == sampling::Split::Train || s == sampling::Split::Val;
  return sampling::split_name(s) == which;
}

Example make_example(const datagen::PlotSample& p, const DatasetIndex& idx,
                     const std::vector<datagen::ModalitySpec>& specs, datagen::Cadence cadence, int years) {
  Example e;
  e.id = p.id;
  for (const auto& s : specs) {
    const auto& stored = datagen::find_spec(idx.specs, s.name);
    const auto it = p.modalities.find(s.name);
    if (it == p.modalities.end()) throw std::runtime_error("plot " + p.id + " has no modality '" + s.name + "'");
    e.inputs.emplace(s.name, datagen::derive_modality(stored, idx.cadence, idx.years, it->second, cadence, years));
  }
  e.labels = p.labels;
  e.targets.resize(p.labels.pixels.size());
  for (std::size_t i = 0; i < e.targets.size(); ++i) {
    e.targets[i] = labels::code(p.labels.pixels[i]);
    e.valid += p.labels.pixels[i] != ClassId::Unknown;
  }
  return e;
}

std::string joined(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

json seeds_json(const std::vector<SeedOutcome>& seeds) {
  json out = json::array();
  for (const auto& s : seeds)
    out.push_back({{"seed", s.seed},
                   {"steps", s.stats.steps},
                   {"final_loss", s.stats.final_loss},
                   {"confusion", metrics::confusion_to_json(s.confusion)}});
  return out;
}

RunResult finish(const RunConfig& cfg, const PreparedData& data, const mtsvit::ModelConfig& mc,
                 std::vector<SeedOutcome> seeds) {
  RunResult r;
  std::vector<metrics::ConfusionMatrix> cms;
  for (const auto& s : seeds) cms.push_back(s.confusion);
  r.report = metrics::report(cms);
  r.seeds = std::move(seeds);
  r.summary = {{"dataset", data.index.describe()},
               {"run", run_config_json(cfg)},
               {"model", {{"config", mtsvit::config_to_json(mc)}, {"parameters", mtsvit::count_parameters(mc)}}},
               {"eval_split", cfg.eval_on},
               {"eval_plots", data.eval.size()},
               {"seeds", seeds_json(r.seeds)},
               {"report", metrics::report_to_json(r.report)},
               {"table", metrics::format_table_row(r.report)}};
  return r;
}

}  // namespace

void set_progress_sink(std::function<void(const std::string&)> sink) { progress() = std::move(sink); }

Normalizer Normalizer::fit(const std::vector<Example>& train) {
  if (train.empty()) throw std::runtime_error("cannot fit normalization: no training plots");
  Normalizer n;
  for (const auto& [name, t0] : train.front().inputs) {
    const std::size_t C = t0.dim(3);
    std::vector<double> sum(C, 0.0), count(C, 0.0);
    for (const auto& e : train) {
      const Tensor& t = e.inputs.at(name);
      for (std::size_t i = 0; i < t.numel(); ++i) {
        sum[i % C] += t[i];
        count[i % C] += 1;
      }
    }
    std::vector<double> mean(C), var(C, 0.0), scale(C);
    for (std::size_t c = 0; c < C; ++c) mean[c] = sum[c] / count[c];
    for (const auto& e : train) {
      const Tensor& t = e.inputs.at(name);
      for (std::size_t i = 0; i < t.numel(); ++i) var[i % C] += (t[i] - mean[i % C]) * (t[i] - mean[i % C]);
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double sd = std::sqrt(var[c] / count[c]);
      scale[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    n.mean[name] = mean;
    n.scale[name] = scale;
  }
  return n;
}

void Normalizer::apply(Example& e) const {
  for (auto& [name, t] : e.inputs) {
    const auto& m = mean.at(name);
    const auto& s = scale.at(name);
    const std::size_t C = m.size();
    if (t.dim(3) != C) throw std::runtime_error("normalizer channel count mismatch for '" + name + "'");
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = (t[i] - m[i % C]) * s[i % C];
  }
}

json Normalizer::to_json() const { return {{"mean", mean}, {"scale", scale}}; }

Normalizer Normalizer::from_json(const json& j) {
  Normalizer n;
  n.mean = j.at("mean").get<std::map<std::string, std::vector<double>>>();
  n.scale = j.at("scale").get<std::map<std::string, std::vector<double>>>();
  return n;
}

PreparedData prepare_data(const RunConfig& cfg, const Normalizer* fixed) {
  cfg.validate();
  if (cfg.dataset.empty()) throw ConfigError("config key 'dataset' is not set");
  PreparedData d;
  d.index = read_dataset_index(cfg.dataset);
  const datagen::Cadence cadence = cfg.cadence.value_or(d.index.cadence);
  const int years = cfg.years ? cfg.years : d.index.years;
  if (years > d.index.years)
    throw ConfigError("requested " + std::to_string(years) + " years but the dataset holds " +
                      std::to_string(d.index.years));
  if (datagen::steps_per_year(cadence) > datagen::steps_per_year(d.index.cadence))
    throw ConfigError("requested cadence " + std::string(datagen::cadence_name(cadence)) +
                      " is finer than the stored " + std::string(datagen::cadence_name(d.index.cadence)));

  std::vector<std::string> names = cfg.modalities;
  if (names.empty())
    for (const auto& s : d.index.specs) names.push_back(s.name);
  // dataset order, so that the model's memory layout does not depend on how the list was typed
  for (const auto& s : d.index.specs)
    if (std::find(names.begin(), names.end(), s.name) != names.end())
      d.specs.push_back(datagen::derive_spec(s, cadence, years));
  for (const auto& n : names) {
    const bool known = std::any_of(d.index.specs.begin(), d.index.specs.end(), [&](const auto& s) { return s.name == n; });
    if (!known) throw ConfigError("modality '" + n + "' is not in the dataset");
  }
  if (std::find(names.begin(), names.end(), cfg.query) == names.end())
    throw ConfigError("modality set {" + joined(names, ",") + "} does not include the query modality '" + cfg.query + "'");

  auto load = [&](const std::string& which, std::size_t limit) {
    std::vector<Example> out;
    for (const auto& e : d.index.plots) {
      if (!in_split(e.split, which)) continue;
      if (limit && out.size() == limit) break;
      out.push_back(make_example(read_plot(plot_dir(cfg.dataset, e.id)), d.index, d.specs, cadence, years));
    }
    if (out.empty()) throw std::runtime_error("split '" + which + "' has no plots");
    return out;
  };
  if (fixed) {
    d.normalizer = *fixed;
  } else {
    d.train = load(cfg.train_on, cfg.train_limit);
    d.normalizer = Normalizer::fit(d.train);
  }
  d.eval = load(cfg.eval_on, cfg.eval_limit);
  for (auto& e : d.train) d.normalizer.apply(e);
  for (auto& e : d.eval) d.normalizer.apply(e);
  return d;
}

mtsvit::ModelConfig model_config(const RunConfig& cfg, const std::vector<datagen::ModalitySpec>& specs) {
  auto mc = mtsvit::make_config(specs, cfg.d, cfg.heads);
  mc.layers_per_stage = cfg.layers;
  mc.mlp_ratio = cfg.mlp_ratio;
  mc.query_modality = cfg.query;
  if (cfg.decoder == "on") mc.decoder_enabled = true;
  if (cfg.decoder == "off") mc.decoder_enabled = false;
  mc.init = mtsvit::init_scheme_from_name(cfg.init);
  mc.validate();
  return mc;
}

TrainStats train_model(const RunConfig& cfg, const mtsvit::ModelConfig& mc, mtsvit::ModelParams& params,
                       const std::vector<Example>& train, std::uint64_t seed) {
  TrainStats st;
  if (train.empty() || cfg.epochs == 0) return st;
  num::Adam opt(params.all(), {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
  num::CounterRng rng(seed, 0x73687566666c65);
  const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::size_t total = cfg.epochs * per_epoch;
  if (cfg.max_steps) total = std::min(total, cfg.max_steps);
  const std::size_t K = mc.num_classes;

  std::vector<std::size_t> order(train.size());
  for (std::size_t step = 0; step < total; ++step) {
    if (step % per_epoch == 0) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
    }
    const std::size_t b0 = (step % per_epoch) * cfg.batch_size;
    const std::size_t b1 = std::min(b0 + cfg.batch_size, order.size());
    std::size_t valid = 0;
    for (std::size_t b = b0; b < b1; ++b) valid += train[order[b]].valid;
    opt.zero_grad();
    double loss = 0.0;
    try {
      for (std::size_t b = b0; b < b1 && valid; ++b) {
        const Example& e = train[order[b]];
        if (!e.valid) continue;
        const double w = static_cast<double>(e.valid) / static_cast<double>(valid);
        const Var logits = mtsvit::forward(e.inputs, mc, params);
        const Var ce = num::cross_entropy(num::reshape(logits, {e.targets.size(), K}), e.targets, labels::kUnknownCode);
        const Var l = num::scale(ce, w);
        loss += l.value()[0];
        l.backward();
      }
      if (valid) opt.step();
    } catch (const num::NumericError& err) {
      throw num::NumericError("training aborted at step " + std::to_string(step) + ": " + err.what());
    }
    if (!std::isfinite(loss)) throw num::NumericError("training aborted at step " + std::to_string(step) + ": non-finite loss");
    st.steps = step + 1;
    st.final_loss = loss;
    if ((step + 1) % per_epoch == 0 || step + 1 == total)
      say("seed " + std::to_string(seed) + " step " + std::to_string(step + 1) + "/" + std::to_string(total) +
          " loss " + std::to_string(loss));
  }
  return st;
}

labels::LabelRaster predict(const Tensor& logits) {
  const std::size_t H = logits.dim(0), W = logits.dim(1), K = logits.dim(2);
  labels::LabelRaster r(H, W);
  for (std::size_t px = 0; px < H * W; ++px) {
    const double* row = logits.data() + px * K;
    r.pixels[px] = static_cast<ClassId>(std::max_element(row, row + K) - row);
  }
  return r;
}

metrics::ConfusionMatrix evaluate(const mtsvit::ModelConfig& mc, const mtsvit::ModelParams& params,
                                  const std::vector<Example>& examples, std::size_t threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, examples.size()));
  std::vector<metrics::ConfusionMatrix> part(threads);
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](std::size_t t) {
    try {
      num::NoGradGuard ng;
      for (std::size_t i = t; i < examples.size(); i += threads) {
        const auto logits = mtsvit::forward(examples[i].inputs, mc, params);
        metrics::accumulate(part[t], predict(logits.value()), examples[i].labels);
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  metrics::ConfusionMatrix cm;
  for (std::size_t t = 0; t < threads; ++t) {
    if (errors[t]) std::rethrow_exception(errors[t]);
    cm.merge(part[t]);
  }
  return cm;
}

RunResult run_train(const RunConfig& cfg, const std::optional<fs::path>& out) {
  const PreparedData data = prepare_data(cfg);
  const auto mc = model_config(cfg, data.specs);
  if (out) fs::create_directories(*out);
  std::vector<SeedOutcome> seeds;
  for (const auto seed : cfg.seeds) {
    auto params = mtsvit::init_params(mc, seed);
    SeedOutcome s;
    s.seed = seed;
    s.stats = train_model(cfg, mc, params, data.train, seed);
    s.confusion = evaluate(mc, params, data.eval, cfg.threads);
    if (out) {
      const json extra = {{"run", run_config_text(cfg)},
                          {"seed", seed},
                          {"steps", s.stats.steps},
                          {"final_loss", s.stats.final_loss},
                          {"normalizer", data.normalizer.to_json()}};
      mtsvit::save_checkpoint(*out / ("seed_" + std::to_string(seed) + ".ckpt"), mc, params, extra);
    }
    seeds.push_back(std::move(s));
  }
  RunResult r = finish(cfg, data, mc, std::move(seeds));
  if (out) {
    write_text(*out / "report.json", r.summary.dump(2) + "\n");
    std::string csv = metrics::table_csv_header("seed") + "\n";
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
      const auto one = metrics::report(std::vector{r.seeds[i].confusion});
      csv += metrics::table_csv_row(std::to_string(r.seeds[i].seed), one) + "\n";
    }
    csv += metrics::table_csv_row("mean", r.report) + "\n";
    write_text(*out / "report.csv", csv);
    write_text(*out / "config.txt", run_config_text(cfg));
  }
  return r;
}

RunResult run_eval(const std::vector<fs::path>& checkpoints, const std::optional<std::string>& dataset,
                   const std::optional<std::string>& eval_on, std::size_t threads) {
  if (checkpoints.empty()) throw ConfigError("eval needs at least one checkpoint");
  std::optional<RunConfig> cfg;
  std::optional<PreparedData> data;
  std::optional<mtsvit::ModelConfig> mc;
  std::vector<SeedOutcome> seeds;
  for (const auto& path : checkpoints) {
    auto ck = mtsvit::load_checkpoint(path);
    RunConfig c;
    try {
      c = parse_run_config(ck.extra.at("run").get<std::string>());
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ": checkpoint has no run record (" + e.what() + ")");
    }
    if (dataset) c.dataset = *dataset;
    if (eval_on) c.eval_on = *eval_on;
    c.threads = threads;
    c.seeds = {ck.extra.at("seed").get<std::uint64_t>()};
    if (!cfg) {
      cfg = c;
      const auto norm = Normalizer::from_json(ck.extra.at("normalizer"));
      data = prepare_data(c, &norm);
      mc = ck.config;
    } else {
      RunConfig a = *cfg, b = c;
      a.seeds = b.seeds = {};
      if (!(a == b) || !(ck.config == *mc))
        throw ConfigError(path.string() + ": checkpoint was trained with a different run configuration");
    }
    SeedOutcome s;
    s.seed = c.seeds.front();
    s.stats.steps = ck.extra.at("steps").get<std::size_t>();
    s.stats.final_loss = ck.extra.at("final_loss").get<double>();
    s.confusion = evaluate(ck.config, ck.params, data->eval, threads);
    seeds.push_back(std::move(s));
  }
  cfg->seeds.clear();
  for (const auto& s : seeds) cfg->seeds.push_back(s.seed);
  return finish(*cfg, *data, *mc, std::move(seeds));
}

namespace {

AblationResult run_grid(const std::vector<std::pair<std::string, RunConfig>>& cells, const std::string& key_header,
                        const std::optional<fs::path>& out) {
  AblationResult a;
  a.csv = metrics::table_csv_header(key_header) + "\n";
  a.summary = {{"rows", json::array()}};
  for (const auto& [key, cfg] : cells) {
    say("run " + key);
    std::string dir = key;
    std::replace(dir.begin(), dir.end(), ',', '_');
    const auto sub = out ? std::optional(*out / dir) : std::nullopt;
    RunResult r = run_train(cfg, sub);
    a.csv += metrics::table_csv_row(key, r.report) + "\n";
    a.summary["rows"].push_back({{"key", key}, {"result", r.summary}});
    a.keys.push_back(key);
    a.runs.push_back(std::move(r));
  }
  if (out) {
    fs::create_directories(*out);
    write_text(*out / "ablation.csv", a.csv);
    write_text(*out / "ablation.json", a.summary.dump(2) + "\n");
  }
  return a;
}

}  // namespace

AblationResult ablate_modality(const RunConfig& cfg, const std::vector<std::vector<std::string>>& combos,
                               const std::optional<fs::path>& out) {
  if (combos.empty()) throw ConfigError("no modality combos given");
  std::vector<std::pair<std::string, RunConfig>> cells;
  for (const auto& combo : combos) {
    if (std::find(combo.begin(), combo.end(), cfg.query) == combo.end())
      throw ConfigError("modality combo {" + joined(combo, ",") + "} does not include the query modality '" +
                        cfg.query + "'");
    RunConfig c = cfg;
    c.modalities = combo;
    cells.emplace_back(joined(combo, "+"), c);
  }
  auto a = run_grid(cells, "modalities", out);
  a.summary["ablation"] = "modality";
  return a;
}

AblationResult ablate_temporal(const RunConfig& cfg, const std::vector<datagen::Cadence>& cadences,
                               const std::vector<int>& years, const std::optional<fs::path>& out) {
  if (cadences.empty() || years.empty()) throw ConfigError("temporal ablation needs cadences and years");
  const auto idx = read_dataset_index(cfg.dataset);
  std::vector<std::pair<std::string, RunConfig>> cells;
  for (const auto cad : cadences)
    for (const int y : years) {
      if (y < 1 || y > idx.years)
        throw ConfigError("requested " + std::to_string(y) + " years but the dataset holds " + std::to_string(idx.years));
      if (datagen::steps_per_year(cad) > datagen::steps_per_year(idx.cadence))
        throw ConfigError("requested cadence " + std::string(datagen::cadence_name(cad)) + " is finer than the stored " +
                          std::string(datagen::cadence_name(idx.cadence)));
      RunConfig c = cfg;
      c.cadence = cad;
      c.years = y;
      cells.emplace_back(std::string(datagen::cadence_name(cad)) + "," + std::to_string(y), c);
    }
  auto a = run_grid(cells, "cadence,years", out);
  a.summary["ablation"] = "temporal";
  return a;
}

}  // namespace forest::harness
