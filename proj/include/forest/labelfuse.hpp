#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace forest::labels {

/// Per-pixel reference class. Codes 0..7 are real classes; Unknown is excluded
/// from loss and metrics.
enum class ClassId : std::uint8_t {
  NaturalForest = 0,
  PlantedForest = 1,
  TreeCrops = 2,
  OtherVegetation = 3,
  Water = 4,
  Ice = 5,
  BareGround = 6,
  BuiltArea = 7,
  Unknown = 255,
};

inline constexpr std::size_t kNumClasses = 8;
inline constexpr std::uint8_t kUnknownCode = 255;

constexpr std::uint8_t code(ClassId c) noexcept { return static_cast<std::uint8_t>(c); }
std::string_view class_name(ClassId c) noexcept;
/// Short column label used in reports (N, P, TC, OV, W, I, BG, BA, U).
std::string_view class_short_name(ClassId c) noexcept;
/// Throws std::invalid_argument for codes outside 0..7 and 255.
ClassId class_from_code(std::uint8_t code);
bool is_forest(ClassId c) noexcept;

/// Land-cover product categories consumed by the non-forest rule.
enum class LandCover : std::uint8_t {
  ShrubGrassCrop = 0,
  Water = 1,
  Ice = 2,
  Bare = 3,
  Built = 4,
  Other = 5,
};
inline constexpr std::size_t kNumLandCover = 6;
LandCover land_cover_from_code(std::uint8_t code);

/// nullopt means undecided: the pixel continues to the next rule.
using Decision = std::optional<ClassId>;

/// Tree height (m) at or above which no non-forest class is assigned.
inline constexpr double kTreeHeightGate = 5.0;

/// Forest consensus: exactly one layer -> that class, several -> Unknown, none -> undecided.
Decision fuse_forest(bool natural, bool planted, bool treecrop) noexcept;

/// Non-forest rule for pixels shorter than the tree-height gate. Other vegetation
/// needs both the land-cover vegetation category and the vegetation flag.
Decision fuse_nonforest(LandCover cover, bool sbtn_vegetation, double tree_height_m) noexcept;

/// Last-resort planted-forest label on deforested land with confident regrowth.
/// Decided pixels pass through unchanged.
Decision apply_regrowth(Decision current, bool deforested, bool regrowth_confident) noexcept;

/// Aligned, pre-binarized evidence rasters (row-major, height x width).
struct SourceStack {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> natural_evidence;
  std::vector<std::uint8_t> planted_evidence;
  std::vector<std::uint8_t> treecrop_evidence;
  std::vector<LandCover> land_cover;
  std::vector<std::uint8_t> sbtn_vegetation;
  std::vector<double> tree_height;
  std::vector<std::uint8_t> deforested;
  std::vector<std::uint8_t> regrowth_confident;

  SourceStack() = default;
  SourceStack(std::size_t h, std::size_t w);
  std::size_t pixels() const noexcept { return height * width; }
  /// Throws num::DimensionError on extent mismatch, std::invalid_argument on negative height.
  void validate() const;
};

struct LabelRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<ClassId> pixels;

  LabelRaster() = default;
  LabelRaster(std::size_t h, std::size_t w, ClassId fill = ClassId::Unknown)
      : height(h), width(w), pixels(h * w, fill) {}
  ClassId at(std::size_t i, std::size_t j) const { return pixels[i * width + j]; }
  ClassId& at(std::size_t i, std::size_t j) { return pixels[i * width + j]; }
};

/// Rule pipeline per pixel: forest -> non-forest -> regrowth -> Unknown.
LabelRaster fuse_stack(const SourceStack& stack);

struct ImageStats {
  std::size_t distinct_classes = 0;
  ClassId dominant = ClassId::Unknown;
};

/// Index 0..7 for real classes, 8 for Unknown.
inline constexpr std::size_t kStatsSlots = kNumClasses + 1;
constexpr std::size_t stats_slot(ClassId c) noexcept {
  return c == ClassId::Unknown ? kNumClasses : static_cast<std::size_t>(c);
}

struct StatsReport {
  std::array<std::uint64_t, kStatsSlots> pixel_counts{};
  /// distinct_histogram[n] = images with n distinct real classes (n = 0..8).
  std::array<std::uint64_t, kNumClasses + 1> distinct_histogram{};
  std::array<std::uint64_t, kStatsSlots> dominant_counts{};
  std::vector<ImageStats> images;
};

/// Per-image distinct-class count and plurality class (ties -> lower code,
/// all-Unknown -> Unknown).
ImageStats image_stats(const LabelRaster& labels);

/// Throws std::invalid_argument on an empty collection.
StatsReport dataset_stats(std::span<const LabelRaster> rasters);

nlohmann::json stats_to_json(const StatsReport& report);
/// Long-format CSV: section,key,value.
std::string stats_to_csv(const StatsReport& report);

}  // namespace forest::labels
