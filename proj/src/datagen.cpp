#include "forest/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "forest/numerics/rng.hpp"

namespace forest::datagen {

using labels::ClassId;
using num::ConfigError;
using num::CounterRng;
using num::Tensor;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t steps_per_year(Cadence c) noexcept { return static_cast<std::size_t>(c); }

std::string_view cadence_name(Cadence c) noexcept {
  switch (c) {
    case Cadence::Annual: return "annual";
    case Cadence::Seasonal: return "seasonal";
    case Cadence::Monthly: return "monthly";
  }
  return "annual";
}

Cadence cadence_from_name(std::string_view name) {
  if (name == "annual") return Cadence::Annual;
  if (name == "seasonal") return Cadence::Seasonal;
  if (name == "monthly") return Cadence::Monthly;
  throw ConfigError("unknown cadence '" + std::string(name) + "' (expected annual, seasonal or monthly)");
}

std::size_t ModalitySpec::years() const noexcept {
  switch (basis) {
    case TimeBasis::Cadenced: return timesteps / steps_per_year(cadence);
    case TimeBasis::Monthly: return timesteps / 12;
    case TimeBasis::Static: return 0;
  }
  return 0;
}

void ModalitySpec::validate() const {
  const std::string what = "modality '" + name + "': ";
  if (name.empty()) throw ConfigError("modality name is empty");
  if (timesteps == 0 || channels == 0) throw ConfigError(what + "timesteps and channels must be >= 1");
  if (spatial && (height == 0 || width == 0)) throw ConfigError(what + "spatial grid must be at least 1x1");
  if (!spatial && (height != 1 || width != 1)) throw ConfigError(what + "non-spatial modalities must be 1x1");
  switch (basis) {
    case TimeBasis::Cadenced:
      if (timesteps % steps_per_year(cadence) != 0) {
        throw ConfigError(what + std::to_string(timesteps) + " steps is not a whole number of " +
                          std::string(cadence_name(cadence)) + " years");
      }
      break;
    case TimeBasis::Monthly:
      if (timesteps % 12 != 0) throw ConfigError(what + "monthly series must cover whole years");
      break;
    case TimeBasis::Static:
      if (timesteps != 1) throw ConfigError(what + "static modalities have T = 1");
      break;
  }
}

std::vector<ModalitySpec> default_modality_set(Cadence cadence, int years, std::size_t s2_grid) {
  if (years < 1 || years > 3) throw ConfigError("years must be 1, 2 or 3 (got " + std::to_string(years) + ")");
  if (s2_grid < 2) throw ConfigError("Sentinel-2 grid must be at least 2");
  const auto y = static_cast<std::size_t>(years);
  const std::size_t t = steps_per_year(cadence) * y;
  return {
      {std::string(kSentinel2), TimeBasis::Cadenced, cadence, t, s2_grid, s2_grid, 10, true},
      {std::string(kSentinel1), TimeBasis::Cadenced, cadence, t, s2_grid, s2_grid, 4, true},
      {std::string(kClimate), TimeBasis::Monthly, cadence, 12 * y, 1, 1, 5, false},
      {std::string(kElevation), TimeBasis::Static, cadence, 1, s2_grid / 2, s2_grid / 2, 3, true},
  };
}

const ModalitySpec& find_spec(std::span<const ModalitySpec> specs, std::string_view name) {
  for (const auto& s : specs)
    if (s.name == name) return s;
  throw ConfigError("no modality named '" + std::string(name) + "'");
}

namespace {

const std::vector<Scenario>& catalog() {
  static const std::vector<Scenario> c = {
      {"easy", ScenarioRule::Easy,
       "Sentinel-2 band k is raised by 2 for class k at every timestep; Sentinel-1 repeats classes 0..3",
       "overfit smoke test", 0.1, 0.05, 0.75},
      {"temporal-phase", ScenarioRule::TemporalPhase,
       "every class is a yearly sinusoid in one Sentinel-2 band with identical annual means; the three forest "
       "classes share band 0 and differ only in phase",
       "temporal cadence ablation (annual cannot separate classes, seasonal and monthly can)", 0.3, 0.05},
      {"modal-fusion", ScenarioRule::ModalFusion,
       "Sentinel-2 separates every class except natural vs planted forest, which share a signature; a plot-level "
       "regime sets which of the two it is and is visible only in climate channel 0 and an elevation offset",
       "modality ablation and decoder on/off", 0.3, 0.05},
      {"flat", ScenarioRule::Flat, "one class, constant signature in every modality",
       "determinism and constant-input checks", 0.0, 0.0},
  };
  return c;
}

std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
  return h;
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct Wave {
  double fx, fy, phase, amp;
};

// Sum of a few low-frequency plane waves plus a bias: smooth over the plot.
struct Field {
  double bias = 0.0;
  std::vector<Wave> waves;

  double operator()(double u, double v) const {
    double s = bias;
    for (const auto& w : waves) s += w.amp * std::sin(kTwoPi * (w.fx * u + w.fy * v) + w.phase);
    return s;
  }
};

std::vector<Field> random_fields(CounterRng& rng, std::size_t n, double bias_sigma, double cycles = 2.5) {
  std::vector<Field> out(n);
  for (auto& f : out) {
    f.bias = bias_sigma * rng.normal();
    for (int k = 0; k < 3; ++k) {
      Wave w;
      w.fx = (2.0 * rng.uniform() - 1.0) * cycles;
      w.fy = (2.0 * rng.uniform() - 1.0) * cycles;
      w.phase = kTwoPi * rng.uniform();
      w.amp = 0.5 + 0.5 * rng.uniform();
      f.waves.push_back(w);
    }
  }
  return out;
}

constexpr double kPhaseAmp = 1.0;
constexpr double kForestPhase[3] = {0.0, kTwoPi / 3.0, 2.0 * kTwoPi / 3.0};

// Everything about one plot that is not noise.
struct Plot {
  const Scenario* sc = nullptr;
  std::vector<Field> latent;
  std::vector<Field> terrain;
  std::array<double, 5> climate_offset{};
  double regime = 1.0;  // modal-fusion: +1 natural, -1 planted

  std::size_t field_count() const { return latent.size(); }

  ClassId field_class(std::size_t f) const {
    switch (sc->rule) {
      case ScenarioRule::Flat: return ClassId::NaturalForest;
      case ScenarioRule::ModalFusion:
        if (f == 0) return regime > 0 ? ClassId::NaturalForest : ClassId::PlantedForest;
        return static_cast<ClassId>(f + 1);
      default: return static_cast<ClassId>(f);
    }
  }

  // Signature class at (u, v) and whether the latent margin makes the label Unknown.
  std::pair<ClassId, bool> classify(double u, double v) const {
    double best = -1e300, second = -1e300;
    std::size_t arg = 0;
    for (std::size_t f = 0; f < latent.size(); ++f) {
      const double x = latent[f](u, v);
      if (x > best) {
        second = best;
        best = x;
        arg = f;
      } else if (x > second) {
        second = x;
      }
    }
    const bool unknown = latent.size() > 1 && best - second < sc->unknown_margin;
    return {field_class(arg), unknown};
  }

  // Noise-free Sentinel-2 reflectance for class c in calendar month m.
  double s2(ClassId c, int month, std::size_t band) const {
    const int k = labels::code(c);
    switch (sc->rule) {
      case ScenarioRule::Easy:
      case ScenarioRule::Flat:
        if (band >= 8) return 0.5;
        return static_cast<int>(band) == k ? 2.0 : 0.0;
      case ScenarioRule::ModalFusion: {
        const int b = k <= 1 ? 0 : k;
        if (band >= 8) return 0.5;
        return static_cast<int>(band) == b ? 2.0 : 0.0;
      }
      case ScenarioRule::TemporalPhase: {
        const double theta = kTwoPi * month / 12.0;
        double v = 0.5;
        if (k <= 2 && band == 0) v += kPhaseAmp * std::cos(theta - kForestPhase[k]);
        if (k >= 3 && static_cast<int>(band) == k - 2) v += kPhaseAmp * std::cos(theta);
        return v;
      }
    }
    return 0.0;
  }

  double s1(ClassId c, std::size_t ch) const {
    double m = 0.0;
    for (int month = 0; month < 12; ++month) m += s2(c, month, ch);
    return 0.5 * m / 12.0;
  }

  double climate(int month, std::size_t ch) const {
    if (sc->rule == ScenarioRule::Flat) return 0.0;
    const double theta = kTwoPi * month / 12.0;
    if (sc->rule == ScenarioRule::ModalFusion && ch == 0) return regime + 0.2 * std::cos(theta);
    return 0.5 * std::cos(theta + static_cast<double>(ch)) + climate_offset[ch];
  }

  double elevation(double u, double v, std::size_t ch) const {
    if (sc->rule == ScenarioRule::Flat) return 0.0;
    double e = 0.5 * terrain[ch](u, v);
    if (sc->rule == ScenarioRule::ModalFusion && ch == 0) e += 0.75 * regime;
    return e;
  }
};

Plot make_plot(std::uint64_t seed, const Scenario& sc) {
  Plot p;
  p.sc = &sc;
  std::size_t nf = 8;
  if (sc.rule == ScenarioRule::ModalFusion) nf = 7;
  if (sc.rule == ScenarioRule::Flat) nf = 1;
  CounterRng latent_rng(seed, name_hash("latent"));
  p.latent = random_fields(latent_rng, nf, 0.4, sc.landscape_cycles);
  CounterRng terrain_rng(seed, name_hash("terrain"));
  p.terrain = random_fields(terrain_rng, 3, 0.0);
  CounterRng plot_rng(seed, name_hash("plot"));
  for (auto& o : p.climate_offset) o = 0.3 * plot_rng.normal();
  p.regime = plot_rng.uniform() < 0.5 ? 1.0 : -1.0;
  return p;
}

Tensor render(const Plot& p, const ModalitySpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t H = spec.height, W = spec.width, C = spec.channels;
  if (spec.name == kSentinel2 && C > 10) throw ConfigError("s2 has at most 10 bands");
  if (spec.name == kSentinel1 && C > 4) throw ConfigError("s1 has at most 4 channels");
  if (spec.name == kClimate && C > 5) throw ConfigError("climate has at most 5 channels");
  if (spec.name == kElevation && C > 3) throw ConfigError("elevation has at most 3 channels");
  const bool known = spec.name == kSentinel2 || spec.name == kSentinel1 || spec.name == kClimate ||
                     spec.name == kElevation;
  if (!known) throw ConfigError("no generator for modality '" + spec.name + "'");

  Tensor out(spec.shape());
  double* o = out.data();
  CounterRng noise(seed, name_hash(spec.name) ^ 0x6e6f697365ULL);
  const double sigma = p.sc->noise;
  auto draw = [&]() { return sigma > 0.0 ? sigma * noise.normal() : 0.0; };

  std::vector<ClassId> cls(H * W);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      cls[i * W + j] = p.classify((j + 0.5) / static_cast<double>(W), (i + 0.5) / static_cast<double>(H)).first;

  if (spec.basis == TimeBasis::Static) {
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t c = 0; c < C; ++c) {
          const double u = (j + 0.5) / static_cast<double>(W), v = (i + 0.5) / static_cast<double>(H);
          const double base = spec.name == kElevation ? p.elevation(u, v, c) : 0.0;
          o[(i * W + j) * C + c] = base + draw();
        }
  } else {
    // Monthly observations, averaged into the modality's timesteps.
    const std::size_t months = 12 * spec.years();
    const std::size_t group = spec.basis == TimeBasis::Monthly ? 1 : 12 / steps_per_year(spec.cadence);
    for (std::size_t mo = 0; mo < months; ++mo) {
      const int month = static_cast<int>(mo % 12);
      double* step = o + (mo / group) * H * W * C;
      for (std::size_t px = 0; px < H * W; ++px) {
        for (std::size_t c = 0; c < C; ++c) {
          double base = 0.0;
          if (spec.name == kSentinel2) base = p.s2(cls[px], month, c);
          else if (spec.name == kSentinel1) base = p.s1(cls[px], c);
          else if (spec.name == kClimate) base = p.climate(month, c);
          step[px * C + c] += base + draw();
        }
      }
    }
    if (group > 1)
      for (auto& v : out.values()) v /= static_cast<double>(group);
  }
  for (auto& v : out.values()) v = to_f32(v);
  return out;
}

}  // namespace

const Scenario& scenario(std::string_view name) {
  for (const auto& s : catalog())
    if (s.name == name) return s;
  std::string known;
  for (const auto& s : catalog()) known += (known.empty() ? "" : ", ") + s.name;
  throw ConfigError("unknown scenario '" + std::string(name) + "' (known: " + known + ")");
}

std::vector<std::string> scenario_names() {
  std::vector<std::string> out;
  for (const auto& s : catalog()) out.push_back(s.name);
  return out;
}

PlotSample gen_plot(std::uint64_t seed, const Scenario& sc, std::span<const ModalitySpec> specs) {
  const ModalitySpec& s2 = find_spec(specs, kSentinel2);
  const Plot p = make_plot(seed, sc);
  PlotSample out;
  for (const auto& spec : specs) out.modalities.emplace(spec.name, render(p, spec, seed));
  out.labels = labels::LabelRaster(s2.height, s2.width);
  for (std::size_t i = 0; i < s2.height; ++i) {
    for (std::size_t j = 0; j < s2.width; ++j) {
      auto [c, unknown] = p.classify((j + 0.5) / static_cast<double>(s2.width), (i + 0.5) / static_cast<double>(s2.height));
      out.labels.at(i, j) = unknown ? ClassId::Unknown : c;
    }
  }
  return out;
}

ClassId decode_pixel(const Scenario& sc, const PlotSample& sample, const ModalitySpec& s2, std::size_t i,
                     std::size_t j) {
  const Tensor& x = sample.modalities.at(std::string(kSentinel2));
  const std::size_t T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (i >= H || j >= W) throw std::out_of_range("decode_pixel: pixel outside the grid");
  auto at = [&](std::size_t t, std::size_t c) { return x[((t * H + i) * W + j) * C + c]; };
  auto band_mean = [&](std::size_t c) {
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) s += at(t, c);
    return s / static_cast<double>(T);
  };

  switch (sc.rule) {
    case ScenarioRule::Flat: return ClassId::NaturalForest;
    case ScenarioRule::Easy: {
      std::size_t best = 0;
      for (std::size_t c = 1; c < 8; ++c)
        if (band_mean(c) > band_mean(best)) best = c;
      return static_cast<ClassId>(best);
    }
    case ScenarioRule::ModalFusion: {
      std::size_t best = 0;
      for (std::size_t c = 2; c < 8; ++c)
        if (band_mean(c) > band_mean(best)) best = c;
      if (best != 0) return static_cast<ClassId>(best);
      auto it = sample.modalities.find(std::string(kClimate));
      if (it == sample.modalities.end()) {
        throw std::invalid_argument("decode_pixel: modal-fusion needs the climate modality");
      }
      double regime = 0.0;
      const Tensor& cl = it->second;
      const std::size_t cc = cl.dim(3);
      for (std::size_t t = 0; t < cl.dim(0); ++t) regime += cl[t * cc];
      return regime > 0 ? ClassId::NaturalForest : ClassId::PlantedForest;
    }
    case ScenarioRule::TemporalPhase: {
      const std::size_t spy = steps_per_year(s2.cadence);
      if (spy < 4) throw ConfigError("temporal-phase labels cannot be decoded from annual composites");
      const double group = 12.0 / static_cast<double>(spy);
      std::size_t best = 0;
      double best_amp = -1.0, best_c = 0.0, best_s = 0.0;
      for (std::size_t b = 0; b < 6; ++b) {
        double cs = 0.0, sn = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const double centre = static_cast<double>(t % spy) * group + (group - 1.0) / 2.0;
          const double theta = kTwoPi * centre / 12.0;
          cs += at(t, b) * std::cos(theta);
          sn += at(t, b) * std::sin(theta);
        }
        const double amp = cs * cs + sn * sn;
        if (amp > best_amp) {
          best_amp = amp;
          best = b;
          best_c = cs;
          best_s = sn;
        }
      }
      if (best > 0) return static_cast<ClassId>(best + 2);
      const double phase = std::atan2(best_s, best_c);
      std::size_t k_best = 0;
      double d_best = 1e300;
      for (std::size_t k = 0; k < 3; ++k) {
        const double d = std::abs(std::remainder(phase - kForestPhase[k], kTwoPi));
        if (d < d_best) {
          d_best = d;
          k_best = k;
        }
      }
      return static_cast<ClassId>(k_best);
    }
  }
  return ClassId::Unknown;
}

GeneratedDataset gen_dataset(const DatasetOptions& options) {
  if (options.n_plots < 3) throw std::invalid_argument("gen_dataset: need at least 3 plots");
  const Scenario& sc = scenario(options.scenario);
  GeneratedDataset ds;
  ds.options = options;
  const auto all = default_modality_set(options.cadence, options.years, options.s2_grid);
  bool has_s2 = false;
  for (const auto& name : options.modalities) {
    ds.specs.push_back(find_spec(all, name));
    has_s2 = has_s2 || name == kSentinel2;
  }
  if (!has_s2) throw ConfigError("gen_dataset: the s2 modality is required");

  const std::size_t n = options.n_plots;
  std::size_t nb = options.blocks;
  if (nb == 0) nb = std::max(std::min<std::size_t>(n, 10), (n + 3) / 4);
  nb = std::min(nb, n);
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(nb))));

  CounterRng place(options.seed, name_hash("placement"));
  const auto ox = static_cast<std::int64_t>(place.below(100)) - 50;
  const auto oy = static_cast<std::int64_t>(place.below(100)) - 50;
  std::vector<sampling::BlockId> blocks;
  for (std::size_t k = 0; k < nb; ++k) {
    blocks.push_back({ox + static_cast<std::int64_t>(k % cols), oy + static_cast<std::int64_t>(k / cols)});
  }
  ds.splits = sampling::assign_splits(blocks, options.seed);

  const double margin = 0.5 * sampling::kPlotExtentM / sampling::kBlockSizeM;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = blocks[i % nb];
    sampling::PlotLocation loc;
    loc.x = (static_cast<double>(b.bx) + margin + place.uniform() * (1.0 - 2.0 * margin)) * sampling::kBlockSizeM;
    loc.y = (static_cast<double>(b.by) + margin + place.uniform() * (1.0 - 2.0 * margin)) * sampling::kBlockSizeM;
    PlotSample p = gen_plot(num::derive_seed(options.seed, i), sc, ds.specs);
    char id[32];
    std::snprintf(id, sizeof id, "plot_%05zu", i);
    p.id = id;
    p.location = loc;
    p.split = ds.splits.at(sampling::block_of(loc));
    ds.plots.push_back(std::move(p));
  }
  return ds;
}

ModalitySpec derive_spec(const ModalitySpec& stored, Cadence cadence, int years) {
  stored.validate();
  if (years < 1) throw ConfigError("years must be >= 1");
  const auto y = static_cast<std::size_t>(years);
  ModalitySpec out = stored;
  if (stored.basis == TimeBasis::Static) return out;
  if (y > stored.years()) {
    throw ConfigError("modality '" + stored.name + "' stores " + std::to_string(stored.years()) + " years, " +
                      std::to_string(years) + " requested");
  }
  if (stored.basis == TimeBasis::Monthly) {
    out.timesteps = 12 * y;
    return out;
  }
  const std::size_t from = steps_per_year(stored.cadence), to = steps_per_year(cadence);
  if (to > from || from % to != 0) {
    throw ConfigError("modality '" + stored.name + "' is stored at " + std::string(cadence_name(stored.cadence)) +
                      " cadence; cannot derive " + std::string(cadence_name(cadence)));
  }
  out.cadence = cadence;
  out.timesteps = to * y;
  return out;
}

Tensor derive_modality(const ModalitySpec& stored, Cadence stored_cadence, int stored_years, const Tensor& values,
                       Cadence cadence, int years) {
  ModalitySpec s = stored;
  if (s.basis == TimeBasis::Cadenced) {
    s.cadence = stored_cadence;
    s.timesteps = steps_per_year(stored_cadence) * static_cast<std::size_t>(stored_years);
  } else if (s.basis == TimeBasis::Monthly) {
    s.timesteps = 12 * static_cast<std::size_t>(stored_years);
  }
  if (values.shape() != s.shape()) {
    throw num::DimensionError("derive_modality: '" + s.name + "' values " + num::shape_string(values.shape()) +
                              " do not match " + num::shape_string(s.shape()));
  }
  const ModalitySpec d = derive_spec(s, cadence, years);
  if (s.basis == TimeBasis::Static) return values;

  const std::size_t plane = s.height * s.width * s.channels;
  const std::size_t kept_in = d.basis == TimeBasis::Monthly ? d.timesteps
                                                             : steps_per_year(s.cadence) * d.years();
  const std::size_t start = s.timesteps - kept_in;
  const std::size_t group = kept_in / d.timesteps;
  Tensor out(d.shape());
  for (std::size_t t = 0; t < d.timesteps; ++t) {
    double* dst = out.data() + t * plane;
    for (std::size_t g = 0; g < group; ++g) {
      const double* src = values.data() + (start + t * group + g) * plane;
      for (std::size_t k = 0; k < plane; ++k) dst[k] += src[k];
    }
    for (std::size_t k = 0; k < plane; ++k) dst[k] /= static_cast<double>(group);
  }
  return out;
}

labels::SourceStack gen_source_stack(std::uint64_t seed, std::size_t height, std::size_t width) {
  labels::SourceStack st(height, width);
  CounterRng rng(seed, name_hash("sources"));
  const auto fields = random_fields(rng, 8, 0.4);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t p = i * width + j;
      const double u = (j + 0.5) / static_cast<double>(width), v = (i + 0.5) / static_cast<double>(height);
      std::size_t c = 0;
      double best = -1e300;
      for (std::size_t f = 0; f < fields.size(); ++f) {
        const double x = fields[f](u, v);
        if (x > best) {
          best = x;
          c = f;
        }
      }
      // Each layer agrees with the latent class most of the time, with some stray votes.
      auto vote = [&](bool truth) { return static_cast<std::uint8_t>(truth ? rng.uniform() < 0.9 : rng.uniform() < 0.04); };
      st.natural_evidence[p] = vote(c == 0);
      st.planted_evidence[p] = vote(c == 1);
      st.treecrop_evidence[p] = vote(c == 2);
      static constexpr labels::LandCover cover[8] = {
          labels::LandCover::Other, labels::LandCover::Other, labels::LandCover::ShrubGrassCrop,
          labels::LandCover::ShrubGrassCrop, labels::LandCover::Water, labels::LandCover::Ice,
          labels::LandCover::Bare, labels::LandCover::Built};
      st.land_cover[p] = rng.uniform() < 0.9 ? cover[c] : static_cast<labels::LandCover>(rng.below(labels::kNumLandCover));
      st.sbtn_vegetation[p] = vote(c == 3);
      st.tree_height[p] = c <= 2 ? 6.0 + 20.0 * rng.uniform() : (rng.uniform() < 0.05 ? 6.0 : 4.0 * rng.uniform());
      st.deforested[p] = static_cast<std::uint8_t>(rng.uniform() < 0.03);
      st.regrowth_confident[p] = static_cast<std::uint8_t>(st.deforested[p] && rng.uniform() < 0.5);
    }
  }
  return st;
}

}  // namespace forest::datagen
