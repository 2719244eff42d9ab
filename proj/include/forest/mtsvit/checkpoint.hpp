#pragma once

#include <filesystem>

#include "forest/mtsvit/model.hpp"
#include "json.hpp"

namespace forest::mtsvit {

/// Layout: u64 little-endian header length, JSON header
/// {"format", "config", "extra", "tensors": [{name, shape, offset}]}, then the
/// parameters as little-endian f64 in directory order. Offsets are bytes into the payload.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  nlohmann::json extra;
};

/// Throws std::runtime_error with the path on I/O or format problems.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace forest::mtsvit
