#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "forest/datagen.hpp"
#include "forest/labelfuse.hpp"
#include "forest/sampler.hpp"
#include "json.hpp"

namespace forest::harness {

namespace fs = std::filesystem;

// Plot directory layout:
//   manifest.json   id, location, split, labels entry, one entry per modality
//   <modality>.f32  little-endian float32, row-major [T, H, W, C]
//   labels.u8       class codes, row-major [H, W], 255 = Unknown
//
// Dataset root layout:
//   dataset.json    generation options and modality specs
//   splits.csv      block -> split (sampler manifest format)
//   plots.jsonl     one line per plot: id, x, y, split
//   plots/<id>/     plot directories

nlohmann::json spec_to_json(const datagen::ModalitySpec& s);
datagen::ModalitySpec spec_from_json(const nlohmann::json& j);

/// Throws std::runtime_error if a value is not exactly representable as float32.
void write_f32(const fs::path& path, const num::Tensor& t);
/// Byte length must equal 4 * numel(shape).
num::Tensor read_f32(const fs::path& path, const num::Shape& shape);

void write_labels(const fs::path& path, const labels::LabelRaster& r);
labels::LabelRaster read_labels(const fs::path& path, std::size_t height, std::size_t width);

void write_plot(const fs::path& dir, const datagen::PlotSample& plot);
/// Validates the manifest against file sizes; errors name the offending file.
datagen::PlotSample read_plot(const fs::path& dir);

struct PlotEntry {
  std::string id;
  sampling::PlotLocation location;
  sampling::Split split = sampling::Split::Train;
};

struct DatasetIndex {
  std::string scenario;
  std::uint64_t seed = 0;
  datagen::Cadence cadence = datagen::Cadence::Seasonal;
  int years = 1;
  std::size_t s2_grid = 0;
  std::vector<datagen::ModalitySpec> specs;
  std::vector<PlotEntry> plots;
  sampling::SplitAssignment splits;

  nlohmann::json describe() const;  // relative, path-free summary
};

void write_dataset(const fs::path& root, const datagen::GeneratedDataset& ds);
DatasetIndex read_dataset_index(const fs::path& root);
fs::path plot_dir(const fs::path& root, const std::string& id);

// Source stacks: stack.json plus one raw file per layer (u8, tree height as f64 LE).
void write_source_stack(const fs::path& dir, const labels::SourceStack& s);
labels::SourceStack read_source_stack(const fs::path& dir);

}  // namespace forest::harness
