#include "forest/labelfuse.hpp"

#include <sstream>
#include <stdexcept>

#include "forest/numerics/tensor.hpp"

namespace forest::labels {

std::string_view class_name(ClassId c) noexcept {
  switch (c) {
    case ClassId::NaturalForest: return "natural_forest";
    case ClassId::PlantedForest: return "planted_forest";
    case ClassId::TreeCrops: return "tree_crops";
    case ClassId::OtherVegetation: return "other_vegetation";
    case ClassId::Water: return "water";
    case ClassId::Ice: return "ice";
    case ClassId::BareGround: return "bare_ground";
    case ClassId::BuiltArea: return "built_area";
    case ClassId::Unknown: return "unknown";
  }
  return "unknown";
}

std::string_view class_short_name(ClassId c) noexcept {
  switch (c) {
    case ClassId::NaturalForest: return "N";
    case ClassId::PlantedForest: return "P";
    case ClassId::TreeCrops: return "TC";
    case ClassId::OtherVegetation: return "OV";
    case ClassId::Water: return "W";
    case ClassId::Ice: return "I";
    case ClassId::BareGround: return "BG";
    case ClassId::BuiltArea: return "BA";
    case ClassId::Unknown: return "U";
  }
  return "U";
}

ClassId class_from_code(std::uint8_t c) {
  if (c < kNumClasses || c == kUnknownCode) return static_cast<ClassId>(c);
  throw std::invalid_argument("invalid class code " + std::to_string(c));
}

bool is_forest(ClassId c) noexcept {
  return c == ClassId::NaturalForest || c == ClassId::PlantedForest || c == ClassId::TreeCrops;
}

LandCover land_cover_from_code(std::uint8_t c) {
  if (c < kNumLandCover) return static_cast<LandCover>(c);
  throw std::invalid_argument("invalid land-cover code " + std::to_string(c));
}

Decision fuse_forest(bool natural, bool planted, bool treecrop) noexcept {
  const int votes = int{natural} + int{planted} + int{treecrop};
  if (votes == 0) return std::nullopt;
  if (votes > 1) return ClassId::Unknown;
  if (natural) return ClassId::NaturalForest;
  if (planted) return ClassId::PlantedForest;
  return ClassId::TreeCrops;
}

Decision fuse_nonforest(LandCover cover, bool sbtn_vegetation, double tree_height_m) noexcept {
  if (!(tree_height_m < kTreeHeightGate)) return std::nullopt;
  switch (cover) {
    case LandCover::ShrubGrassCrop:
      if (sbtn_vegetation) return ClassId::OtherVegetation;
      return std::nullopt;
    case LandCover::Water: return ClassId::Water;
    case LandCover::Ice: return ClassId::Ice;
    case LandCover::Bare: return ClassId::BareGround;
    case LandCover::Built: return ClassId::BuiltArea;
    case LandCover::Other: return std::nullopt;
  }
  return std::nullopt;
}

Decision apply_regrowth(Decision current, bool deforested, bool regrowth_confident) noexcept {
  if (current) return current;
  if (deforested && regrowth_confident) return ClassId::PlantedForest;
  return std::nullopt;
}

SourceStack::SourceStack(std::size_t h, std::size_t w)
    : height(h),
      width(w),
      natural_evidence(h * w, 0),
      planted_evidence(h * w, 0),
      treecrop_evidence(h * w, 0),
      land_cover(h * w, LandCover::Other),
      sbtn_vegetation(h * w, 0),
      tree_height(h * w, 0.0),
      deforested(h * w, 0),
      regrowth_confident(h * w, 0) {}

void SourceStack::validate() const {
  const std::size_t n = pixels();
  auto check = [&](std::size_t size, const char* name) {
    if (size != n) {
      throw num::DimensionError(std::string("source stack raster '") + name + "' has " + std::to_string(size) +
                                " pixels, expected " + std::to_string(height) + "x" + std::to_string(width));
    }
  };
  check(natural_evidence.size(), "natural_evidence");
  check(planted_evidence.size(), "planted_evidence");
  check(treecrop_evidence.size(), "treecrop_evidence");
  check(land_cover.size(), "land_cover");
  check(sbtn_vegetation.size(), "sbtn_vegetation");
  check(tree_height.size(), "tree_height");
  check(deforested.size(), "deforested");
  check(regrowth_confident.size(), "regrowth_confident");
  for (double h : tree_height) {
    if (!(h >= 0.0)) throw std::invalid_argument("source stack tree_height must be >= 0");
  }
}

LabelRaster fuse_stack(const SourceStack& stack) {
  stack.validate();
  LabelRaster out(stack.height, stack.width);
  for (std::size_t p = 0; p < stack.pixels(); ++p) {
    Decision d = fuse_forest(stack.natural_evidence[p] != 0, stack.planted_evidence[p] != 0,
                             stack.treecrop_evidence[p] != 0);
    if (!d) d = fuse_nonforest(stack.land_cover[p], stack.sbtn_vegetation[p] != 0, stack.tree_height[p]);
    d = apply_regrowth(d, stack.deforested[p] != 0, stack.regrowth_confident[p] != 0);
    out.pixels[p] = d.value_or(ClassId::Unknown);
  }
  return out;
}

ImageStats image_stats(const LabelRaster& labels) {
  std::array<std::uint64_t, kNumClasses> counts{};
  for (ClassId c : labels.pixels) {
    if (c != ClassId::Unknown) ++counts[static_cast<std::size_t>(c)];
  }
  ImageStats s;
  std::uint64_t best = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (counts[k] == 0) continue;
    ++s.distinct_classes;
    if (counts[k] > best) {
      best = counts[k];
      s.dominant = static_cast<ClassId>(k);
    }
  }
  return s;
}

StatsReport dataset_stats(std::span<const LabelRaster> rasters) {
  if (rasters.empty()) throw std::invalid_argument("dataset_stats: empty raster collection");
  StatsReport r;
  r.images.reserve(rasters.size());
  for (const auto& raster : rasters) {
    for (ClassId c : raster.pixels) ++r.pixel_counts[stats_slot(c)];
    ImageStats s = image_stats(raster);
    ++r.distinct_histogram[s.distinct_classes];
    ++r.dominant_counts[stats_slot(s.dominant)];
    r.images.push_back(s);
  }
  return r;
}

namespace {
ClassId slot_class(std::size_t slot) { return slot == kNumClasses ? ClassId::Unknown : static_cast<ClassId>(slot); }
}  // namespace

nlohmann::json stats_to_json(const StatsReport& report) {
  nlohmann::json j;
  const double n_images = static_cast<double>(report.images.size());
  j["images"] = report.images.size();
  for (std::size_t s = 0; s < kStatsSlots; ++s) {
    const std::string name(class_name(slot_class(s)));
    j["pixel_counts"][name] = report.pixel_counts[s];
    j["dominant_counts"][name] = report.dominant_counts[s];
    j["dominant_fractions"][name] = static_cast<double>(report.dominant_counts[s]) / n_images;
  }
  j["distinct_class_histogram"] = report.distinct_histogram;
  return j;
}

std::string stats_to_csv(const StatsReport& report) {
  std::ostringstream os;
  os << "section,key,value\n";
  for (std::size_t s = 0; s < kStatsSlots; ++s) os << "pixels," << class_name(slot_class(s)) << ',' << report.pixel_counts[s] << '\n';
  for (std::size_t s = 0; s < kStatsSlots; ++s) os << "dominant," << class_name(slot_class(s)) << ',' << report.dominant_counts[s] << '\n';
  for (std::size_t n = 0; n < report.distinct_histogram.size(); ++n) os << "distinct_classes," << n << ',' << report.distinct_histogram[n] << '\n';
  return os.str();
}

}  // namespace forest::labels
