#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forest/datagen.hpp"
#include "forest/harness/config.hpp"
#include "forest/harness/plot_io.hpp"
#include "forest/metrics.hpp"
#include "forest/mtsvit/model.hpp"
#include "json.hpp"

namespace forest::harness {

struct Example {
  std::string id;
  std::map<std::string, num::Tensor> inputs;  // normalized, at the run's cadence and years
  labels::LabelRaster labels;
  std::vector<int> targets;  // class codes, 255 for Unknown
  std::size_t valid = 0;     // non-Unknown pixels
};

/// Per-modality, per-channel affine map fitted on training examples:
/// x -> (x - mean) * scale with scale = 1 / std (1 for constant channels).
struct Normalizer {
  std::map<std::string, std::vector<double>> mean;
  std::map<std::string, std::vector<double>> scale;

  static Normalizer fit(const std::vector<Example>& train);
  void apply(Example& e) const;
  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
};

struct PreparedData {
  DatasetIndex index;
  std::vector<datagen::ModalitySpec> specs;  // selected modalities, derived cadence/years
  std::vector<Example> train;
  std::vector<Example> eval;
  Normalizer normalizer;
};

/// Reads the dataset, selects modalities, derives cadence/years, applies the split
/// selection and limits, then normalizes with `fixed` or with statistics of the
/// training examples. Missing splits are a std::runtime_error naming the split.
PreparedData prepare_data(const RunConfig& cfg, const Normalizer* fixed = nullptr);

mtsvit::ModelConfig model_config(const RunConfig& cfg, const std::vector<datagen::ModalitySpec>& specs);

struct TrainStats {
  std::size_t steps = 0;
  double final_loss = 0.0;  // last step's mean pixel loss
};

/// Minibatch Adam on the mean cross-entropy over the batch's non-Unknown pixels.
/// A non-finite value aborts with num::NumericError naming the step.
TrainStats train_model(const RunConfig& cfg, const mtsvit::ModelConfig& mc, mtsvit::ModelParams& params,
                       const std::vector<Example>& train, std::uint64_t seed);

/// Argmax over classes, ties to the lower class.
labels::LabelRaster predict(const num::Tensor& logits);

metrics::ConfusionMatrix evaluate(const mtsvit::ModelConfig& mc, const mtsvit::ModelParams& params,
                                  const std::vector<Example>& examples, std::size_t threads = 0);

struct SeedOutcome {
  std::uint64_t seed = 0;
  TrainStats stats;
  metrics::ConfusionMatrix confusion;
};

struct RunResult {
  std::vector<SeedOutcome> seeds;
  metrics::MetricReport report;
  nlohmann::json summary;  // deterministic, path-free
};

/// One training per seed, evaluated on cfg.eval_on. With `out`, writes
/// seed_<s>.ckpt, report.json, report.csv and config.txt there.
RunResult run_train(const RunConfig& cfg, const std::optional<fs::path>& out = std::nullopt);

/// Evaluates saved checkpoints (one per seed) on the run's eval split. `dataset` and
/// `eval_on` override what the checkpoints recorded.
RunResult run_eval(const std::vector<fs::path>& checkpoints, const std::optional<std::string>& dataset,
                   const std::optional<std::string>& eval_on, std::size_t threads = 0);

struct AblationResult {
  std::vector<std::string> keys;
  std::vector<RunResult> runs;
  std::string csv;
  nlohmann::json summary;
};

/// One full run per modality combo. Each combo must contain the query modality.
AblationResult ablate_modality(const RunConfig& cfg, const std::vector<std::vector<std::string>>& combos,
                               const std::optional<fs::path>& out = std::nullopt);

/// One full run per (cadence, years) cell, cadences outer.
AblationResult ablate_temporal(const RunConfig& cfg, const std::vector<datagen::Cadence>& cadences,
                               const std::vector<int>& years, const std::optional<fs::path>& out = std::nullopt);

/// Progress lines (one per epoch) go here when set.
void set_progress_sink(std::function<void(const std::string&)> sink);

}  // namespace forest::harness
