#include "forest/mtsvit/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

namespace forest::mtsvit {

namespace {

constexpr const char* kFormat = "forestbench-checkpoint-1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["format"] = kFormat;
  header["config"] = config_to_json(cfg);
  header["extra"] = extra;
  header["tensors"] = nlohmann::json::array();
  std::string payload;
  for (const auto* p : params.all()) {
    header["tensors"].push_back({{"name", p->name()}, {"shape", p->value().shape()}, {"offset", payload.size()}});
    for (double v : p->value().values()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
  }
  const std::string text = header.dump();
  std::string blob;
  put_u64(blob, text.size());
  blob += text;
  blob += payload;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(path, "cannot open for writing");
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) fail(path, "write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open");
  const std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  if (blob.size() < 8) fail(path, "truncated header");
  const std::uint64_t hlen = get_u64(bytes);
  if (hlen > blob.size() - 8) fail(path, "header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(8, hlen));
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("bad header: ") + e.what());
  }
  if (header.value("format", "") != kFormat) fail(path, "unknown format");
  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.extra = header.value("extra", nlohmann::json::object());
  const std::size_t base = 8 + hlen;
  for (const auto& t : header.at("tensors")) {
    const auto shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::size_t>();
    const std::size_t n = num::shape_numel(shape);
    if (base + offset + 8 * n > blob.size()) fail(path, "tensor '" + t.at("name").get<std::string>() + "' truncated");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get_u64(bytes + base + offset + 8 * i));
    ck.params.add(t.at("name").get<std::string>(), Tensor(shape, std::move(values)));
  }
  // The directory must describe exactly the parameters this config builds.
  const ModelParams expect = init_params(ck.config, 0);
  if (expect.all().size() != ck.params.all().size()) fail(path, "parameter set does not match its config");
  for (const auto* p : expect.all()) {
    if (!ck.params.contains(p->name()) || ck.params.get(p->name()).value().shape() != p->value().shape()) {
      fail(path, "parameter '" + p->name() + "' missing or misshapen");
    }
  }
  return ck;
}

}  // namespace forest::mtsvit
