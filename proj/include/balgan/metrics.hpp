#pragma once

// Binary classification metrics from scores and {0,1} labels.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace balgan {

struct Confusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// A metric that may be undefined (zero denominator); `reason` says why.
struct Metric {
  std::optional<double> value;
  std::string reason;

  bool defined() const { return value.has_value(); }
  static Metric of(double v) { return {v, {}}; }
  static Metric absent(std::string why) { return {std::nullopt, std::move(why)}; }
};

struct EpochCurve {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
};

struct MetricsReport {
  Confusion confusion;
  double accuracy = 0.0;
  Metric precision, recall, f1, auc;
  std::vector<EpochCurve> curves;
};

// Positive prediction when score >= threshold.
Confusion confusion_at(std::span<const float> scores, std::span<const int> labels, double threshold = 0.5);
MetricsReport metrics_from_confusion(const Confusion& c);
// Area under the ROC curve via the rank-sum statistic, ties averaged.
Metric auc_rank(std::span<const float> scores, std::span<const int> labels);
MetricsReport compute_metrics(std::span<const float> scores, std::span<const int> labels, double threshold = 0.5);

}  // namespace balgan
