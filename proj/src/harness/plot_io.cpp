#include "forest/harness/plot_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace forest::harness {

using nlohmann::json;

namespace {

std::string basis_name(datagen::TimeBasis b) {
  switch (b) {
    case datagen::TimeBasis::Cadenced: return "cadenced";
    case datagen::TimeBasis::Monthly: return "monthly";
    case datagen::TimeBasis::Static: return "static";
  }
  return "cadenced";
}

datagen::TimeBasis basis_from_name(const std::string& s) {
  if (s == "cadenced") return datagen::TimeBasis::Cadenced;
  if (s == "monthly") return datagen::TimeBasis::Monthly;
  if (s == "static") return datagen::TimeBasis::Static;
  throw std::runtime_error("unknown time basis '" + s + "'");
}

std::string read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write to " + path.string());
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_bytes(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_bytes(path, j.dump(2) + "\n"); }

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

template <typename U>
U get_le(const char* p) {
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(static_cast<unsigned char>(p[b])) << (8 * b);
  return v;
}

std::string u8_bytes(const std::vector<std::uint8_t>& v) { return std::string(v.begin(), v.end()); }

std::vector<std::uint8_t> read_u8(const fs::path& path, std::size_t n) {
  const std::string b = read_bytes(path);
  if (b.size() != n)
    throw std::runtime_error(path.string() + ": expected " + std::to_string(n) + " bytes, found " +
                             std::to_string(b.size()));
  return std::vector<std::uint8_t>(b.begin(), b.end());
}

num::Shape shape_of(const json& j) { return j.get<std::vector<std::size_t>>(); }

json location_json(const sampling::PlotLocation& l) { return {{"x", l.x}, {"y", l.y}}; }

}  // namespace

json spec_to_json(const datagen::ModalitySpec& s) {
  return {{"name", s.name},
          {"basis", basis_name(s.basis)},
          {"cadence", std::string(datagen::cadence_name(s.cadence))},
          {"timesteps", s.timesteps},
          {"height", s.height},
          {"width", s.width},
          {"channels", s.channels},
          {"spatial", s.spatial}};
}

datagen::ModalitySpec spec_from_json(const json& j) {
  datagen::ModalitySpec s;
  s.name = j.at("name").get<std::string>();
  s.basis = basis_from_name(j.at("basis").get<std::string>());
  s.cadence = datagen::cadence_from_name(j.at("cadence").get<std::string>());
  s.timesteps = j.at("timesteps").get<std::size_t>();
  s.height = j.at("height").get<std::size_t>();
  s.width = j.at("width").get<std::size_t>();
  s.channels = j.at("channels").get<std::size_t>();
  s.spatial = j.at("spatial").get<bool>();
  s.validate();
  return s;
}

void write_f32(const fs::path& path, const num::Tensor& t) {
  std::string out;
  out.reserve(t.numel() * 4);
  for (double v : t.values()) {
    const auto f = static_cast<float>(v);
    if (static_cast<double>(f) != v && !(std::isnan(v) && std::isnan(f)))
      throw std::runtime_error(path.string() + ": value " + std::to_string(v) + " is not a float32");
    put_le(out, std::bit_cast<std::uint32_t>(f));
  }
  write_bytes(path, out);
}

num::Tensor read_f32(const fs::path& path, const num::Shape& shape) {
  const std::string b = read_bytes(path);
  num::Tensor t(shape);
  if (b.size() != t.numel() * 4)
    throw std::runtime_error(path.string() + ": expected " + std::to_string(t.numel() * 4) + " bytes for shape " +
                             num::shape_string(shape) + ", found " + std::to_string(b.size()));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(b.data() + 4 * i)));
  return t;
}

void write_labels(const fs::path& path, const labels::LabelRaster& r) {
  std::string out(r.pixels.size(), '\0');
  for (std::size_t i = 0; i < r.pixels.size(); ++i) out[i] = static_cast<char>(labels::code(r.pixels[i]));
  write_bytes(path, out);
}

labels::LabelRaster read_labels(const fs::path& path, std::size_t height, std::size_t width) {
  const auto bytes = read_u8(path, height * width);
  labels::LabelRaster r(height, width);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    try {
      r.pixels[i] = labels::class_from_code(bytes[i]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path.string() + ": " + e.what() + " at pixel " + std::to_string(i));
    }
  }
  return r;
}

void write_plot(const fs::path& dir, const datagen::PlotSample& plot) {
  fs::create_directories(dir);
  json mods = json::array();
  for (const auto& [name, t] : plot.modalities) {
    const std::string file = name + ".f32";
    write_f32(dir / file, t);
    mods.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float32"}, {"byte_order", "little"},
                    {"file", file}});
  }
  write_labels(dir / "labels.u8", plot.labels);
  json m = {{"id", plot.id},
            {"location", location_json(plot.location)},
            {"split", std::string(sampling::split_name(plot.split))},
            {"labels",
             {{"file", "labels.u8"}, {"shape", {plot.labels.height, plot.labels.width}}, {"dtype", "uint8"}}},
            {"modalities", mods}};
  write_json(dir / "manifest.json", m);
}

datagen::PlotSample read_plot(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  datagen::PlotSample p;
  try {
    p.id = m.at("id").get<std::string>();
    p.location = {m.at("location").at("x").get<double>(), m.at("location").at("y").get<double>()};
    p.split = sampling::split_from_name(m.at("split").get<std::string>());
    for (const auto& e : m.at("modalities")) {
      if (e.at("dtype") != "float32" || e.at("byte_order") != "little")
        throw std::runtime_error("unsupported dtype/byte order for " + e.at("name").get<std::string>());
      p.modalities.emplace(e.at("name").get<std::string>(),
                           read_f32(dir / e.at("file").get<std::string>(), shape_of(e.at("shape"))));
    }
    const auto ls = shape_of(m.at("labels").at("shape"));
    if (ls.size() != 2) throw std::runtime_error("labels shape must be [H, W]");
    p.labels = read_labels(dir / m.at("labels").at("file").get<std::string>(), ls[0], ls[1]);
  } catch (const json::exception& e) {
    throw std::runtime_error((dir / "manifest.json").string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error((dir / "manifest.json").string() + ": " + e.what());
  }
  return p;
}

fs::path plot_dir(const fs::path& root, const std::string& id) { return root / "plots" / id; }

json DatasetIndex::describe() const {
  json specs_j = json::array();
  for (const auto& s : specs) specs_j.push_back(spec_to_json(s));
  std::array<std::size_t, 3> counts{};
  for (const auto& p : plots) ++counts[static_cast<std::size_t>(p.split)];
  return {{"scenario", scenario},
          {"seed", seed},
          {"cadence", std::string(datagen::cadence_name(cadence))},
          {"years", years},
          {"s2_grid", s2_grid},
          {"plots", plots.size()},
          {"plots_per_split", {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}}},
          {"modalities", specs_j}};
}

void write_dataset(const fs::path& root, const datagen::GeneratedDataset& ds) {
  fs::create_directories(root / "plots");
  json specs = json::array();
  for (const auto& s : ds.specs) specs.push_back(spec_to_json(s));
  const auto& o = ds.options;
  write_json(root / "dataset.json", {{"format", "forestbench-dataset-1"},
                                     {"scenario", o.scenario},
                                     {"seed", o.seed},
                                     {"cadence", std::string(datagen::cadence_name(o.cadence))},
                                     {"years", o.years},
                                     {"s2_grid", o.s2_grid},
                                     {"specs", specs}});
  write_bytes(root / "splits.csv", sampling::split_manifest_csv(ds.splits));
  std::string lines;
  for (const auto& p : ds.plots) {
    lines += json{{"id", p.id}, {"x", p.location.x}, {"y", p.location.y},
                  {"split", std::string(sampling::split_name(p.split))}}
                 .dump() +
             "\n";
    write_plot(plot_dir(root, p.id), p);
  }
  write_bytes(root / "plots.jsonl", lines);
}

DatasetIndex read_dataset_index(const fs::path& root) {
  const json d = read_json(root / "dataset.json");
  DatasetIndex idx;
  try {
    if (d.at("format") != "forestbench-dataset-1")
      throw std::runtime_error("unsupported dataset format " + d.at("format").dump());
    idx.scenario = d.at("scenario").get<std::string>();
    idx.seed = d.at("seed").get<std::uint64_t>();
    idx.cadence = datagen::cadence_from_name(d.at("cadence").get<std::string>());
    idx.years = d.at("years").get<int>();
    idx.s2_grid = d.at("s2_grid").get<std::size_t>();
    for (const auto& s : d.at("specs")) idx.specs.push_back(spec_from_json(s));
  } catch (const json::exception& e) {
    throw std::runtime_error((root / "dataset.json").string() + ": " + e.what());
  }
  idx.splits = sampling::parse_split_manifest_csv(read_bytes(root / "splits.csv"));
  std::istringstream lines(read_bytes(root / "plots.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    idx.plots.push_back({j.at("id").get<std::string>(),
                         {j.at("x").get<double>(), j.at("y").get<double>()},
                         sampling::split_from_name(j.at("split").get<std::string>())});
  }
  return idx;
}

namespace {
struct Layer {
  const char* name;
  std::vector<std::uint8_t> labels::SourceStack::*field;
};
constexpr Layer kU8Layers[] = {
    {"natural_evidence", &labels::SourceStack::natural_evidence},
    {"planted_evidence", &labels::SourceStack::planted_evidence},
    {"treecrop_evidence", &labels::SourceStack::treecrop_evidence},
    {"sbtn_vegetation", &labels::SourceStack::sbtn_vegetation},
    {"deforested", &labels::SourceStack::deforested},
    {"regrowth_confident", &labels::SourceStack::regrowth_confident},
};
}  // namespace

void write_source_stack(const fs::path& dir, const labels::SourceStack& s) {
  s.validate();
  fs::create_directories(dir);
  json layers = json::array();
  for (const auto& l : kU8Layers) {
    write_bytes(dir / (std::string(l.name) + ".u8"), u8_bytes(s.*l.field));
    layers.push_back({{"name", l.name}, {"file", std::string(l.name) + ".u8"}, {"dtype", "uint8"}});
  }
  std::string cover;
  for (auto c : s.land_cover) cover.push_back(static_cast<char>(c));
  write_bytes(dir / "land_cover.u8", cover);
  layers.push_back({{"name", "land_cover"}, {"file", "land_cover.u8"}, {"dtype", "uint8"}});
  std::string th;
  for (double v : s.tree_height) put_le(th, std::bit_cast<std::uint64_t>(v));
  write_bytes(dir / "tree_height.f64", th);
  layers.push_back({{"name", "tree_height"}, {"file", "tree_height.f64"}, {"dtype", "float64"}});
  write_json(dir / "stack.json", {{"height", s.height}, {"width", s.width}, {"layers", layers}});
}

labels::SourceStack read_source_stack(const fs::path& dir) {
  const json j = read_json(dir / "stack.json");
  labels::SourceStack s(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>());
  const std::size_t n = s.pixels();
  for (const auto& l : kU8Layers) s.*l.field = read_u8(dir / (std::string(l.name) + ".u8"), n);
  const auto cover = read_u8(dir / "land_cover.u8", n);
  for (std::size_t i = 0; i < n; ++i) {
    try {
      s.land_cover[i] = labels::land_cover_from_code(cover[i]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error((dir / "land_cover.u8").string() + ": " + e.what());
    }
  }
  const std::string th = read_bytes(dir / "tree_height.f64");
  if (th.size() != 8 * n)
    throw std::runtime_error((dir / "tree_height.f64").string() + ": expected " + std::to_string(8 * n) + " bytes");
  for (std::size_t i = 0; i < n; ++i) s.tree_height[i] = std::bit_cast<double>(get_le<std::uint64_t>(th.data() + 8 * i));
  s.validate();
  return s;
}

}  // namespace forest::harness
