#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forest/labelfuse.hpp"
#include "forest/numerics/tensor.hpp"
#include "forest/sampler.hpp"

namespace forest::datagen {

enum class Cadence : std::uint8_t { Annual = 1, Seasonal = 4, Monthly = 12 };

std::size_t steps_per_year(Cadence c) noexcept;
std::string_view cadence_name(Cadence c) noexcept;
/// "annual" | "seasonal" | "monthly"; anything else is a num::ConfigError.
Cadence cadence_from_name(std::string_view name);

/// How a modality's time axis relates to the requested cadence.
enum class TimeBasis : std::uint8_t {
  Cadenced,  // T = steps_per_year(cadence) * years
  Monthly,   // T = 12 * years regardless of cadence
  Static,    // T = 1
};

inline constexpr std::string_view kSentinel2 = "s2";
inline constexpr std::string_view kSentinel1 = "s1";
inline constexpr std::string_view kClimate = "climate";
inline constexpr std::string_view kElevation = "elevation";

struct ModalitySpec {
  std::string name;
  TimeBasis basis = TimeBasis::Cadenced;
  Cadence cadence = Cadence::Annual;  // only meaningful for Cadenced
  std::size_t timesteps = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;
  bool spatial = true;

  num::Shape shape() const { return {timesteps, height, width, channels}; }
  /// Spatial modalities need H, W >= 1; non-spatial ones must be exactly 1x1.
  /// Cadenced time axes must be whole years.
  void validate() const;
  std::size_t years() const noexcept;
};

/// Sentinel-2 [T, g, g, 10], Sentinel-1 [T, g, g, 4], climate [12*years, 1, 1, 5]
/// (non-spatial), elevation [1, g/2, g/2, 3]. g defaults to 128 (10 m over 1280 m).
std::vector<ModalitySpec> default_modality_set(Cadence cadence, int years, std::size_t s2_grid = 128);

const ModalitySpec& find_spec(std::span<const ModalitySpec> specs, std::string_view name);

enum class ScenarioRule : std::uint8_t { Easy, TemporalPhase, ModalFusion, Flat };

/// A generative recipe. Each scenario states where the class signal lives and
/// which experiment it exercises.
struct Scenario {
  std::string name;
  ScenarioRule rule = ScenarioRule::Easy;
  std::string signal;    // where the discriminative signal is placed
  std::string supports;  // experiment the scenario exists for
  double noise = 0.0;    // additive Gaussian sigma per monthly observation
  double unknown_margin = 0.0;  // latent ties closer than this become Unknown
  double landscape_cycles = 2.5;  // max spatial frequency of the class fields, cycles per plot side
};

/// Catalog: "easy", "temporal-phase", "modal-fusion", "flat".
const Scenario& scenario(std::string_view name);
std::vector<std::string> scenario_names();

struct PlotSample {
  std::string id;
  sampling::PlotLocation location;
  sampling::Split split = sampling::Split::Train;
  std::map<std::string, num::Tensor> modalities;  // name -> [T, H, W, C]
  labels::LabelRaster labels;                     // Sentinel-2 grid
};

/// Deterministic in (seed, scenario, specs). Values are rounded to 32-bit float
/// precision so that on-disk round trips are exact. `specs` must contain "s2".
PlotSample gen_plot(std::uint64_t seed, const Scenario& scenario, std::span<const ModalitySpec> specs);

/// The scenario's stated per-pixel decision rule. With zero noise it recovers every
/// non-Unknown label. Temporal-phase needs a cadence finer than annual.
labels::ClassId decode_pixel(const Scenario& scenario, const PlotSample& sample, const ModalitySpec& s2, std::size_t i,
                             std::size_t j);

struct DatasetOptions {
  std::size_t n_plots = 8;
  std::uint64_t seed = 0;
  std::string scenario = "easy";
  Cadence cadence = Cadence::Seasonal;
  int years = 1;
  std::size_t s2_grid = 16;
  std::size_t blocks = 0;  // 0 = max(min(n, 10), ceil(n / 4))
  std::vector<std::string> modalities{"s2", "s1", "climate", "elevation"};
};

struct GeneratedDataset {
  DatasetOptions options;
  std::vector<ModalitySpec> specs;
  std::vector<PlotSample> plots;
  sampling::SplitAssignment splits;
};

/// Places plots round-robin over a grid of 100 km blocks, assigns block splits,
/// and generates each plot from derive_seed(seed, index).
GeneratedDataset gen_dataset(const DatasetOptions& options);

/// Averages a stored modality down to `cadence` and keeps the last `years` years.
/// Throws num::ConfigError if the request is finer or longer than what is stored.
num::Tensor derive_modality(const ModalitySpec& stored, Cadence stored_cadence, int stored_years,
                            const num::Tensor& values, Cadence cadence, int years);
ModalitySpec derive_spec(const ModalitySpec& stored, Cadence cadence, int years);

/// Synthetic evidence rasters with realistic disagreement, for the fusion tools.
labels::SourceStack gen_source_stack(std::uint64_t seed, std::size_t height, std::size_t width);

}  // namespace forest::datagen
