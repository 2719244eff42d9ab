#include "forest/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "forest/numerics/rng.hpp"

namespace forest::sampling {

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

BlockId block_of(const PlotLocation& loc) {
  if (!std::isfinite(loc.x) || !std::isfinite(loc.y)) {
    throw std::invalid_argument("block_of: plot coordinates must be finite");
  }
  return {static_cast<std::int64_t>(std::floor(loc.x / kBlockSizeM)),
          static_cast<std::int64_t>(std::floor(loc.y / kBlockSizeM))};
}

SplitCounts split_quota(std::size_t n) noexcept {
  SplitCounts c;
  c.train = (8 * n) / 10;
  c.val = n / 10;
  c.test = n - c.train - c.val;
  return c;
}

SplitAssignment assign_splits(std::span<const BlockId> blocks, std::uint64_t seed) {
  std::set<BlockId> unique(blocks.begin(), blocks.end());
  if (unique.empty()) throw std::invalid_argument("assign_splits: empty block set");
  std::vector<BlockId> order(unique.begin(), unique.end());
  num::CounterRng rng(seed, 0x73706c6974);
  rng.shuffle(order);
  const SplitCounts quota = split_quota(order.size());
  SplitAssignment out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    Split s = Split::Test;
    if (i < quota.train) s = Split::Train;
    else if (i < quota.train + quota.val) s = Split::Val;
    out.emplace(order[i], s);
  }
  return out;
}

std::vector<std::string> stratified_sample(std::span<const PoolPlot> pool,
                                           const std::map<labels::ClassId, std::size_t>& targets,
                                           std::uint64_t seed) {
  std::vector<std::string> selected;
  for (const auto& [cls, want] : targets) {
    if (want == 0) continue;
    std::vector<std::string> candidates;
    for (const auto& p : pool) {
      if (p.dominant == cls) candidates.push_back(p.id);
    }
    if (candidates.size() < want) {
      throw std::invalid_argument("stratified_sample: class " + std::string(labels::class_name(cls)) + " needs " +
                                  std::to_string(want) + " plots but the pool has " +
                                  std::to_string(candidates.size()) + " (short by " +
                                  std::to_string(want - candidates.size()) + ")");
    }
    std::sort(candidates.begin(), candidates.end());
    num::CounterRng rng(seed, 0x7374726174ULL + labels::code(cls));
    for (std::size_t i = 0; i < want; ++i) {
      std::size_t j = i + rng.below(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
      selected.push_back(candidates[i]);
    }
  }
  return selected;
}

std::map<labels::ClassId, std::size_t> targets_from_fractions(const std::map<labels::ClassId, double>& fractions,
                                                              std::size_t n) {
  std::map<labels::ClassId, std::size_t> out;
  for (const auto& [cls, f] : fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("targets_from_fractions: negative fraction");
    out[cls] = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  }
  return out;
}

std::string split_manifest_csv(const SplitAssignment& assignment) {
  std::ostringstream os;
  os << "bx,by,split\n";
  for (const auto& [block, split] : assignment) os << block.bx << ',' << block.by << ',' << split_name(split) << '\n';
  return os.str();
}

SplitAssignment parse_split_manifest_csv(std::string_view csv) {
  std::istringstream is{std::string(csv)};
  std::string line;
  SplitAssignment out;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != "bx,by,split") throw std::invalid_argument("split manifest: unexpected header '" + line + "'");
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw std::invalid_argument("split manifest: malformed line '" + line + "'");
    }
    BlockId b{std::stoll(line.substr(0, c1)), std::stoll(line.substr(c1 + 1, c2 - c1 - 1))};
    out[b] = split_from_name(line.substr(c2 + 1));
  }
  return out;
}

}  // namespace forest::sampling
