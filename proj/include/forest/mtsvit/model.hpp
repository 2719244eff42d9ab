#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forest/datagen.hpp"
#include "forest/numerics/attention.hpp"
#include "forest/numerics/autograd.hpp"
#include "json.hpp"

namespace forest::mtsvit {

using num::Parameter;
using num::Shape;
using num::Tensor;
using num::Var;

struct PatchSize {
  std::size_t t = 1;
  std::size_t h = 2;
  std::size_t w = 2;
  bool operator==(const PatchSize&) const = default;
};

/// One input modality as the model sees it: raw extents plus patching.
struct ModalityConfig {
  std::string name;
  std::size_t timesteps = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;
  bool spatial = true;
  PatchSize patch;

  std::size_t t() const { return timesteps / patch.t; }
  std::size_t h() const { return height / patch.h; }
  std::size_t w() const { return width / patch.w; }
  std::size_t patch_volume() const { return patch.t * patch.h * patch.w * channels; }
  bool operator==(const ModalityConfig&) const = default;
};

// Fixed: truncated normal sigma 0.02 everywhere (ViT convention).
// FanIn: projections sigma 1/sqrt(fan_in), position tables and class queries unit normal.
enum class InitScheme { Fixed, FanIn };

std::string_view init_scheme_name(InitScheme s) noexcept;
InitScheme init_scheme_from_name(std::string_view name);

struct ModelConfig {
  std::size_t d = 192;
  std::size_t layers_per_stage = 2;
  std::size_t heads = 4;
  std::size_t num_classes = 8;  // K
  std::size_t mlp_ratio = 4;
  std::vector<ModalityConfig> modalities;
  std::string query_modality = "s2";
  bool decoder_enabled = true;
  InitScheme init = InitScheme::Fixed;

  /// Throws num::ConfigError naming the offending field, modality or axis.
  void validate() const;
  const ModalityConfig& modality(const std::string& name) const;
  const ModalityConfig& query() const { return modality(query_modality); }
  /// Longest token sequence of the spatial encoder (max h*w over spatial modalities).
  std::size_t max_hw() const;
  std::size_t max_t() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Patch sizes per modality: (1,2,2) for spatial inputs, (1,1,1) for non-spatial ones.
PatchSize default_patch(const datagen::ModalitySpec& spec);
/// Config over `specs` with full-size defaults (d 192, 2 layers, 4 heads, K 8).
ModelConfig make_config(std::span<const datagen::ModalitySpec> specs, std::size_t d = 192, std::size_t heads = 4);

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

/// All trainable tensors, addressable by name, in a fixed creation order.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;
  ModelParams(ModelParams&&) = default;
  ModelParams& operator=(ModelParams&&) = default;

  Parameter& add(const std::string& name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Var var(const std::string& name) const { return get(name).var(); }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Builds every parameter group. Weights ~ truncated normal (sigma 0.02, cut at 2 sigma),
/// biases 0, LayerNorm gains 1. Deterministic in `seed`.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
/// Pure function of the config; equals init_params(cfg, s).scalar_count().
std::size_t count_parameters(const ModelConfig& cfg);

struct TokenGrid {
  Var tokens;                       // [t, h, w, d]
  std::vector<std::uint8_t> valid;  // over h*w, all 1 for native grids
  std::string modality;
  bool spatial = true;
};

/// Test hooks. Production code leaves both at their defaults.
struct ForwardHooks {
  std::optional<double> pad_fill;  // value stored at padded spatial positions (default 0)
  bool identity_spatial = false;   // replace the spatial encoder with the identity
};

/// Flattens each (p_t, p_h, p_w) patch in (pt, ph, pw, C) order and projects it to d.
/// Throws num::ConfigError naming the modality and axis when an extent is not divisible.
TokenGrid patchify_embed(const Tensor& x, const ModalityConfig& m, const Var& weight, const Var& bias);

/// Adds the shared learned spatial table, indexed by flat position i*w + j.
TokenGrid add_spatial_position(const TokenGrid& g, const ModelParams& p);

/// Key mask of the padded spatial batch: one row per (modality, t) slice of the spatial
/// grids, in order, valid on the first h*w of max h*w positions.
num::AttentionMask spatial_key_mask(const std::vector<TokenGrid>& grids);

/// Shared encoder over spatial grids; non-spatial grids pass through untouched.
/// Grids are padded to the longest h*w, run as one batch with key masks, then un-padded.
std::vector<TokenGrid> spatial_encode(const std::vector<TokenGrid>& grids, const ModelConfig& cfg,
                                      const ModelParams& p, const ForwardHooks& hooks = {});

/// The attention pattern of the temporal encoder over t time tokens followed by K
/// class queries: time tokens see time tokens, query k sees the time tokens and itself.
num::AttentionMask temporal_mask(std::size_t t, std::size_t k);

/// Per pixel: t tokens (plus temporal table) then the K class queries, through the
/// shared temporal encoder. Returns only the query outputs, [h*w, K, d].
Var temporal_encode(const TokenGrid& grid, const ModelConfig& cfg, const ModelParams& p);

/// Per class stream: the query modality's h*w tokens attend to themselves, then to the
/// concatenated tokens of every other modality. `query` and `others` are [n, K, d].
Var crossmodal_decode(const Var& query, const std::vector<Var>& others, const ModelConfig& cfg,
                      const ModelParams& p);

/// [h*w, K, d] -> logits [h*p_h, w*p_w, K]. Logit (i, j, k) comes from stream k of token
/// (i / p_h, j / p_w), output unit (i % p_h) * p_w + j % p_w.
Var segmentation_head(const Var& decoded, std::size_t h, std::size_t w, const PatchSize& patch,
                      const ModelParams& p);

/// Everything between the inputs and the logits, for tests and diagnostics.
struct ForwardTrace {
  std::vector<TokenGrid> embedded;
  std::vector<TokenGrid> encoded;
  std::map<std::string, Var> class_streams;
  Var decoded;
  Var logits;
};

/// Full model on one plot. `inputs` maps modality names to [T, H, W, C]; missing
/// modalities are a num::ConfigError. Returns logits [H, W, K] of the query modality.
Var forward(const std::map<std::string, Tensor>& inputs, const ModelConfig& cfg, const ModelParams& p,
            const ForwardHooks& hooks = {}, ForwardTrace* trace = nullptr);

/// Shapes of every stage, derived from the config alone.
struct StageShapes {
  std::map<std::string, Shape> tokens;         // [t, h, w, d]
  Shape spatial_batch;                         // [sum of t, max h*w, d]
  std::map<std::string, Shape> class_streams;  // [h*w, K, d]
  std::size_t decoder_memory = 0;              // key/value length per class stream
  Shape logits;                                // [H, W, K]
};
StageShapes stage_shapes(const ModelConfig& cfg);

}  // namespace forest::mtsvit
