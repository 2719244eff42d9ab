#include "forest/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "forest/mtsvit/model.hpp"
#include "forest/numerics/tensor.hpp"

namespace forest::harness {

using num::ConfigError;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + s + "'");
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  if (key == "dataset") dataset = v;
  else if (key == "modalities") modalities = split_list(v);
  else if (key == "query") query = v;
  else if (key == "cadence") cadence = v.empty() ? std::nullopt : std::optional(datagen::cadence_from_name(v));
  else if (key == "years") years = parse_number<int>(key, v);
  else if (key == "decoder") decoder = v;
  else if (key == "init") init = v;
  else if (key == "d") d = parse_number<std::size_t>(key, v);
  else if (key == "heads") heads = parse_number<std::size_t>(key, v);
  else if (key == "layers") layers = parse_number<std::size_t>(key, v);
  else if (key == "mlp_ratio") mlp_ratio = parse_number<std::size_t>(key, v);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, v);
  else if (key == "epochs") epochs = parse_number<std::size_t>(key, v);
  else if (key == "max_steps") max_steps = parse_number<std::size_t>(key, v);
  else if (key == "lr") lr = parse_number<double>(key, v);
  else if (key == "beta1") beta1 = parse_number<double>(key, v);
  else if (key == "beta2") beta2 = parse_number<double>(key, v);
  else if (key == "eps") eps = parse_number<double>(key, v);
  else if (key == "seeds") {
    seeds.clear();
    for (const auto& s : split_list(v)) seeds.push_back(parse_number<std::uint64_t>(key, s));
  } else if (key == "train_on") train_on = v;
  else if (key == "eval_on") eval_on = v;
  else if (key == "train_limit") train_limit = parse_number<std::size_t>(key, v);
  else if (key == "eval_limit") eval_limit = parse_number<std::size_t>(key, v);
  else if (key == "threads") threads = parse_number<std::size_t>(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::validate() const {
  if (decoder != "auto" && decoder != "on" && decoder != "off")
    throw ConfigError("decoder must be auto, on or off, got '" + decoder + "'");
  mtsvit::init_scheme_from_name(init);
  if (train_on != "train" && train_on != "train+val" && train_on != "all")
    throw ConfigError("train_on must be train, train+val or all, got '" + train_on + "'");
  if (eval_on != "test" && eval_on != "val" && eval_on != "train" && eval_on != "all")
    throw ConfigError("eval_on must be test, val, train or all, got '" + eval_on + "'");
  if (years < 0 || years > 3) throw ConfigError("years must be 0..3, got " + std::to_string(years));
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (heads == 0 || d % heads != 0)
    throw ConfigError("d (" + std::to_string(d) + ") must be a multiple of heads (" + std::to_string(heads) + ")");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!modalities.empty() && std::find(modalities.begin(), modalities.end(), query) == modalities.end())
    throw ConfigError("modality set {" + join(modalities) + "} does not include the query modality '" + query + "'");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    c.set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_text(const RunConfig& c) {
  std::vector<std::string> seeds;
  for (auto s : c.seeds) seeds.push_back(std::to_string(s));
  std::ostringstream o;
  o << "dataset = " << c.dataset << "\n"
    << "modalities = " << join(c.modalities) << "\n"
    << "query = " << c.query << "\n"
    << "cadence = " << (c.cadence ? std::string(datagen::cadence_name(*c.cadence)) : "") << "\n"
    << "years = " << c.years << "\n"
    << "decoder = " << c.decoder << "\n"
    << "init = " << c.init << "\n"
    << "d = " << c.d << "\nheads = " << c.heads << "\nlayers = " << c.layers << "\nmlp_ratio = " << c.mlp_ratio
    << "\n"
    << "batch_size = " << c.batch_size << "\nepochs = " << c.epochs << "\nmax_steps = " << c.max_steps << "\n"
    << "lr = " << fmt(c.lr) << "\nbeta1 = " << fmt(c.beta1) << "\nbeta2 = " << fmt(c.beta2)
    << "\neps = " << fmt(c.eps) << "\n"
    << "seeds = " << join(seeds) << "\n"
    << "train_on = " << c.train_on << "\neval_on = " << c.eval_on << "\n"
    << "train_limit = " << c.train_limit << "\neval_limit = " << c.eval_limit << "\n"
    << "threads = " << c.threads << "\n";
  return o.str();
}

nlohmann::json run_config_json(const RunConfig& c) {
  return {{"modalities", c.modalities},
          {"query", c.query},
          {"cadence", c.cadence ? std::string(datagen::cadence_name(*c.cadence)) : ""},
          {"years", c.years},
          {"decoder", c.decoder},
          {"init", c.init},
          {"d", c.d},
          {"heads", c.heads},
          {"layers", c.layers},
          {"mlp_ratio", c.mlp_ratio},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"seeds", c.seeds},
          {"train_on", c.train_on},
          {"eval_on", c.eval_on},
          {"train_limit", c.train_limit},
          {"eval_limit", c.eval_limit}};
}

}  // namespace forest::harness
