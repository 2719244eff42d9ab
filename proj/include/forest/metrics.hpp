#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forest/labelfuse.hpp"
#include "json.hpp"

namespace forest::metrics {

using labels::kNumClasses;
using PerClass = std::array<double, kNumClasses>;

/// Rows are truth, columns prediction. Unknown-truth pixels only bump `ignored`.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};
  std::uint64_t ignored = 0;

  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;
  /// Counts add; merge is associative and commutative.
  ConfusionMatrix& merge(const ConfusionMatrix& other) noexcept;
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Adds one raster pair. Throws num::DimensionError on extent mismatch and
/// std::invalid_argument if a prediction is Unknown.
void accumulate(ConfusionMatrix& cm, const labels::LabelRaster& predictions, const labels::LabelRaster& truth);
void accumulate(ConfusionMatrix& cm, std::span<const labels::ClassId> predictions,
                std::span<const labels::ClassId> truth);

/// F1_k = 2TP / (2TP + FP + FN), 0 when the denominator is 0.
PerClass f1_per_class(const ConfusionMatrix& cm) noexcept;
/// TP / (TP + FP), 0 when undefined.
PerClass precision_per_class(const ConfusionMatrix& cm) noexcept;
/// TP / (TP + FN), 0 when undefined.
PerClass recall_per_class(const ConfusionMatrix& cm) noexcept;

struct SeedMetrics {
  PerClass precision{};
  PerClass recall{};
  PerClass f1{};
  double overall_f1 = 0.0;  // mean over the 8 classes
  double forest_f1 = 0.0;   // mean over classes 0..2
};

SeedMetrics seed_metrics(const ConfusionMatrix& cm) noexcept;

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1); 0 for a single seed
};

Summary summarize(std::span<const double> values) noexcept;

struct MetricReport {
  std::vector<SeedMetrics> seeds;
  Summary overall_f1;
  Summary forest_f1;
  std::array<Summary, kNumClasses> class_f1{};
};

/// Per-seed metrics plus mean and sample stddev across seeds. Throws on an empty span.
MetricReport report(std::span<const ConfusionMatrix> per_seed);

nlohmann::json report_to_json(const MetricReport& r);

/// Columns of the results table: Overall, Forests, N, P, TC (mean and std each).
std::string table_csv_header(const std::string& key_columns);
std::string table_csv_row(const std::string& key_values, const MetricReport& r);
/// Human-readable "81.1 (0.1)" cells in percent.
std::string format_table_row(const MetricReport& r);

nlohmann::json confusion_to_json(const ConfusionMatrix& cm);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);

}  // namespace forest::metrics
