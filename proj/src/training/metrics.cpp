#include "imn/training/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace imn {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw std::invalid_argument("metrics: empty dataset");
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("metrics: label " + std::to_string(y) + " is not 0 or 1");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("metrics: non-finite score");
  }
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // 1-based ranks, tied groups share their average rank; all sums are doubled.
  std::size_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::size_t twice_avg_rank = (i + 1) + (j + 1);
    for (std::size_t m = i; m <= j; ++m) {
      if (labels[order[m]] == 1) twice_rank_sum += twice_avg_rank;
    }
    i = j + 1;
  }
  // U = R_pos - P(P+1)/2, doubled.
  const std::size_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricsReport r;
  r.threshold = threshold;
  r.confusion = confusion_at(scores, labels, threshold);
  const auto& c = r.confusion;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);

  r.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  const double specificity = ratio(tn, tn + fp);
  const bool has_pos = c.tp + c.fn > 0, has_neg = c.tn + c.fp > 0;
  if (has_pos && has_neg) {
    // (TPR + TNR) / 2 as one quotient of integers
    r.balanced_accuracy = (tp * (tn + fp) + tn * (tp + fn)) / (2.0 * (tp + fn) * (tn + fp));
  } else {
    r.balanced_accuracy = has_pos ? r.recall : specificity;
  }
  r.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  r.mcc = den == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(den);
  r.auroc = auroc(scores, labels);
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"accuracy", r.accuracy},
                      {"balanced_accuracy", r.balanced_accuracy},
                      {"precision", r.precision},
                      {"recall", r.recall},
                      {"f1", r.f1},
                      {"mcc", r.mcc},
                      {"auroc", nullptr},
                      {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn},
                                     {"fn", r.confusion.fn}}},
                      {"threshold", r.threshold},
                      {"count", r.confusion.total()}};
  if (r.auroc) j["auroc"] = *r.auroc;
  return j;
}

}  // namespace imn
