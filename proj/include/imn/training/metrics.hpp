#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <json.hpp>

namespace imn {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct MetricsReport {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  std::optional<double> auroc;  // undefined when only one class is present
  Confusion confusion;
  double threshold = 0.5;
};

inline constexpr double kDefaultThreshold = 0.5;

/// Predicted positive iff score >= threshold.
Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold);

/// Mann-Whitney statistic from average ranks, so tied scores earn half credit.
std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels);

/// Rates with a zero denominator are reported as 0. Balanced accuracy averages
/// the recall of the classes that are actually present.
MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                              double threshold = kDefaultThreshold);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace imn
