#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forest/labelfuse.hpp"

namespace forest::sampling {

inline constexpr double kPlotExtentM = 1280.0;
inline constexpr double kBlockSizeM = 100000.0;

/// Plot centre in a planar working frame (meters). Plots always span 1280 m.
struct PlotLocation {
  double x = 0.0;
  double y = 0.0;
  static constexpr double extent_m = kPlotExtentM;
};

struct BlockId {
  std::int64_t bx = 0;
  std::int64_t by = 0;
  auto operator<=>(const BlockId&) const = default;
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string_view split_name(Split s) noexcept;
/// Accepts "train", "val", "test".
Split split_from_name(std::string_view name);

using SplitAssignment = std::map<BlockId, Split>;

/// Floor division of each coordinate by 100 km (negative coordinates round toward -inf).
BlockId block_of(const PlotLocation& loc);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// floor(0.8 n) train, floor(0.1 n) val, remainder test.
SplitCounts split_quota(std::size_t n) noexcept;

/// Sorts and deduplicates `blocks`, shuffles them with `seed`, then fills the
/// exact quota in shuffled order. Throws std::invalid_argument when empty.
SplitAssignment assign_splits(std::span<const BlockId> blocks, std::uint64_t seed);

struct PoolPlot {
  std::string id;
  labels::ClassId dominant = labels::ClassId::Unknown;
};

/// Uniform sample without replacement of exactly `targets[c]` plots per dominant
/// class c. Candidates are ordered by id before sampling, so the result does not
/// depend on pool order. Throws std::invalid_argument naming the class and the
/// shortfall when a pool is too small.
std::vector<std::string> stratified_sample(std::span<const PoolPlot> pool,
                                           const std::map<labels::ClassId, std::size_t>& targets,
                                           std::uint64_t seed);

/// Rounds fraction * n per class.
std::map<labels::ClassId, std::size_t> targets_from_fractions(const std::map<labels::ClassId, double>& fractions,
                                                              std::size_t n);

/// CSV with header "bx,by,split", blocks in sorted order.
std::string split_manifest_csv(const SplitAssignment& assignment);
SplitAssignment parse_split_manifest_csv(std::string_view csv);

}  // namespace forest::sampling
