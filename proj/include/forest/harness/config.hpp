#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forest/datagen.hpp"
#include "json.hpp"

namespace forest::harness {

/// Everything a train/eval/ablation run needs. Text form is one `key = value` per
/// line, `#` starts a comment, unknown keys are a num::ConfigError.
///
///   dataset       path to a generated dataset root
///   modalities    comma list, empty = every stored modality
///   query         query modality (s2)
///   cadence       annual | seasonal | monthly, empty = as stored
///   years         1..3, 0 = as stored
///   decoder       auto | on | off (auto = on iff more than one modality)
///   init          fan_in | fixed (sigma 0.02, suited to wide models only)
///   d, heads, layers, mlp_ratio        model width and depth
///   batch_size, epochs, max_steps      max_steps 0 = no cap
///   lr, beta1, beta2, eps              Adam
///   seeds         comma list of training seeds
///   train_on      train | train+val | all
///   eval_on       test | val | train | all
///   train_limit, eval_limit            first N plots of each set, 0 = all
///   threads       evaluation threads, 0 = hardware concurrency
struct RunConfig {
  std::string dataset;
  std::vector<std::string> modalities;
  std::string query = "s2";
  std::optional<datagen::Cadence> cadence;
  int years = 0;
  std::string decoder = "auto";
  std::string init = "fan_in";
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t mlp_ratio = 4;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.9999;
  double eps = 1e-8;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string train_on = "train";
  std::string eval_on = "test";
  std::size_t train_limit = 0;
  std::size_t eval_limit = 0;
  std::size_t threads = 0;

  void set(std::string_view key, std::string_view value);
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Round-trips through parse_run_config.
std::string run_config_text(const RunConfig& c);
/// Without the dataset path and thread count, so reports stay path-free and machine-independent.
nlohmann::json run_config_json(const RunConfig& c);

}  // namespace forest::harness
