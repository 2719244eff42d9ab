#include "forest/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "forest/numerics/tensor.hpp"

namespace forest::metrics {

using labels::ClassId;

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto v : row) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) t += counts[k][k];
  return t;
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) noexcept {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    for (std::size_t j = 0; j < kNumClasses; ++j) counts[i][j] += other.counts[i][j];
  ignored += other.ignored;
  return *this;
}

void accumulate(ConfusionMatrix& cm, std::span<const ClassId> predictions, std::span<const ClassId> truth) {
  if (predictions.size() != truth.size()) {
    throw num::DimensionError("accumulate: " + std::to_string(predictions.size()) + " predictions for " +
                              std::to_string(truth.size()) + " truth pixels");
  }
  for (std::size_t p = 0; p < truth.size(); ++p) {
    if (truth[p] == ClassId::Unknown) {
      ++cm.ignored;
      continue;
    }
    if (predictions[p] == ClassId::Unknown) throw std::invalid_argument("accumulate: prediction cannot be Unknown");
    ++cm.counts[labels::code(truth[p])][labels::code(predictions[p])];
  }
}

void accumulate(ConfusionMatrix& cm, const labels::LabelRaster& predictions, const labels::LabelRaster& truth) {
  if (predictions.height != truth.height || predictions.width != truth.width) {
    throw num::DimensionError("accumulate: prediction " + std::to_string(predictions.height) + "x" +
                              std::to_string(predictions.width) + " vs truth " + std::to_string(truth.height) + "x" +
                              std::to_string(truth.width));
  }
  accumulate(cm, predictions.pixels, truth.pixels);
}

namespace {

struct Tallies {
  std::array<std::uint64_t, kNumClasses> tp{}, fp{}, fn{};
};

Tallies tallies(const ConfusionMatrix& cm) {
  Tallies t;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      const auto v = cm.counts[i][j];
      if (i == j) t.tp[i] += v;
      else {
        t.fn[i] += v;
        t.fp[j] += v;
      }
    }
  }
  return t;
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

PerClass f1_per_class(const ConfusionMatrix& cm) noexcept {
  const Tallies t = tallies(cm);
  PerClass out{};
  for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = ratio(2 * t.tp[k], 2 * t.tp[k] + t.fp[k] + t.fn[k]);
  return out;
}

PerClass precision_per_class(const ConfusionMatrix& cm) noexcept {
  const Tallies t = tallies(cm);
  PerClass out{};
  for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = ratio(t.tp[k], t.tp[k] + t.fp[k]);
  return out;
}

PerClass recall_per_class(const ConfusionMatrix& cm) noexcept {
  const Tallies t = tallies(cm);
  PerClass out{};
  for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = ratio(t.tp[k], t.tp[k] + t.fn[k]);
  return out;
}

SeedMetrics seed_metrics(const ConfusionMatrix& cm) noexcept {
  SeedMetrics m;
  m.precision = precision_per_class(cm);
  m.recall = recall_per_class(cm);
  m.f1 = f1_per_class(cm);
  double all = 0.0;
  for (double v : m.f1) all += v;
  m.overall_f1 = all / static_cast<double>(kNumClasses);
  m.forest_f1 = (m.f1[0] + m.f1[1] + m.f1[2]) / 3.0;
  return m;
}

Summary summarize(std::span<const double> values) noexcept {
  Summary s;
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

MetricReport report(std::span<const ConfusionMatrix> per_seed) {
  if (per_seed.empty()) throw std::invalid_argument("report: need at least one seed");
  MetricReport r;
  for (const auto& cm : per_seed) r.seeds.push_back(seed_metrics(cm));
  std::vector<double> overall, forest;
  for (const auto& s : r.seeds) {
    overall.push_back(s.overall_f1);
    forest.push_back(s.forest_f1);
  }
  r.overall_f1 = summarize(overall);
  r.forest_f1 = summarize(forest);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    std::vector<double> v;
    for (const auto& s : r.seeds) v.push_back(s.f1[k]);
    r.class_f1[k] = summarize(v);
  }
  return r;
}

namespace {

nlohmann::json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

nlohmann::json per_class_json(const PerClass& v) {
  nlohmann::json j;
  for (std::size_t k = 0; k < kNumClasses; ++k) j[std::string(labels::class_name(static_cast<ClassId>(k)))] = v[k];
  return j;
}

}  // namespace

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["overall_f1"] = summary_json(r.overall_f1);
  j["forest_f1"] = summary_json(r.forest_f1);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    j["class_f1"][std::string(labels::class_name(static_cast<ClassId>(k)))] = summary_json(r.class_f1[k]);
  }
  j["seeds"] = nlohmann::json::array();
  for (const auto& s : r.seeds) {
    j["seeds"].push_back({{"overall_f1", s.overall_f1},
                          {"forest_f1", s.forest_f1},
                          {"f1", per_class_json(s.f1)},
                          {"precision", per_class_json(s.precision)},
                          {"recall", per_class_json(s.recall)}});
  }
  return j;
}

std::string table_csv_header(const std::string& key_columns) {
  std::string h = key_columns.empty() ? "" : key_columns + ",";
  return h + "overall,overall_std,forests,forests_std,N,N_std,P,P_std,TC,TC_std";
}

std::string table_csv_row(const std::string& key_values, const MetricReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  if (!key_values.empty()) os << key_values << ',';
  os << r.overall_f1.mean << ',' << r.overall_f1.stddev << ',' << r.forest_f1.mean << ',' << r.forest_f1.stddev;
  for (std::size_t k = 0; k < 3; ++k) os << ',' << r.class_f1[k].mean << ',' << r.class_f1[k].stddev;
  return os.str();
}

std::string format_table_row(const MetricReport& r) {
  auto cell = [](const Summary& s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f (%.1f)", 100.0 * s.mean, 100.0 * s.stddev);
    return std::string(buf);
  };
  std::string out = "Overall " + cell(r.overall_f1) + " | Forests " + cell(r.forest_f1);
  const char* names[] = {"N", "P", "TC"};
  for (std::size_t k = 0; k < 3; ++k) out += std::string(" | ") + names[k] + " " + cell(r.class_f1[k]);
  return out;
}

nlohmann::json confusion_to_json(const ConfusionMatrix& cm) {
  return {{"counts", cm.counts}, {"ignored", cm.ignored}};
}

ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  ConfusionMatrix cm;
  cm.counts = j.at("counts").get<decltype(cm.counts)>();
  cm.ignored = j.at("ignored").get<std::uint64_t>();
  return cm;
}

}  // namespace forest::metrics
