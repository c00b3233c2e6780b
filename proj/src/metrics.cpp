#include "balgan/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "balgan/errors.hpp"

namespace balgan {

namespace {

void check_inputs(std::span<const float> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  for (int l : labels) {
    if (l != 0 && l != 1) throw ContractError("labels must be 0 or 1");
  }
}

}  // namespace

Confusion confusion_at(std::span<const float> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  return c;
}

MetricsReport metrics_from_confusion(const Confusion& c) {
  if (c.total() == 0) throw ContractError("metrics need at least one sample");
  MetricsReport r;
  r.confusion = c;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.precision = c.tp + c.fp == 0 ? Metric::absent("no positive predictions")
                                 : Metric::of(static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp));
  r.recall = c.tp + c.fn == 0 ? Metric::absent("no positive samples")
                              : Metric::of(static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn));
  if (!r.precision.defined() || !r.recall.defined()) {
    r.f1 = Metric::absent(!r.precision.defined() ? r.precision.reason : r.recall.reason);
  } else if (*r.precision.value + *r.recall.value == 0.0) {
    r.f1 = Metric::absent("precision and recall are both 0");
  } else {
    const double p = *r.precision.value, q = *r.recall.value;
    r.f1 = Metric::of(2.0 * p * q / (p + q));
  }
  return r;
}

Metric auc_rank(std::span<const float> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::int64_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share their average.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
  if (positives == 0 || negatives == 0) return Metric::absent("AUC needs both classes present");
  const double p = static_cast<double>(positives);
  return Metric::of((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives)));
}

MetricsReport compute_metrics(std::span<const float> scores, std::span<const int> labels, double threshold) {
  MetricsReport r = metrics_from_confusion(confusion_at(scores, labels, threshold));
  r.auc = auc_rank(scores, labels);
  return r;
}

}  // namespace balgan
