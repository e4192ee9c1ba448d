#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lampo/core.hpp"
#include "lampo/error.hpp"
#include "lampo/tasks.hpp"

namespace lampo {

// Parses "accuracy", "macro_f1" or "f1:<label>".
inline MetricSpec parse_metric(std::string_view id, const OrderedLabelSpace& space) {
  if (id == "accuracy") return {MetricKind::kAccuracy, 0};
  if (id == "macro_f1") return {MetricKind::kMacroF1, 0};
  if (id.starts_with("f1:")) return {MetricKind::kF1OfLabel, label_index(id.substr(3), space)};
  throw ConfigError("unknown metric '" + std::string(id) + "'");
}

inline std::string metric_name(const MetricSpec& metric, const OrderedLabelSpace& space) {
  switch (metric.kind) {
    case MetricKind::kAccuracy: return "accuracy";
    case MetricKind::kMacroF1: return "macro_f1";
    case MetricKind::kF1OfLabel: return "f1:" + space[metric.label];
  }
  return "unknown";
}

// F1 of one class; 0 when precision or recall is undefined.
inline double f1_of_label(std::span<const std::size_t> predictions, std::span<const std::size_t> golds,
                          std::size_t label) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] == label;
    const bool g = golds[i] == label;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp == 0) return 0.0;
  const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
  return 2.0 * static_cast<double>(tp) / denom;
}

inline double compute_metric(const MetricSpec& metric, std::span<const std::size_t> predictions,
                             std::span<const std::size_t> golds, std::size_t m) {
  if (predictions.size() != golds.size()) {
    throw ValidationError("predictions and golds differ in length (" +
                          std::to_string(predictions.size()) + " vs " + std::to_string(golds.size()) + ")");
  }
  if (predictions.empty()) throw ValidationError("no predictions to score");
  switch (metric.kind) {
    case MetricKind::kAccuracy: {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == golds[i];
      return static_cast<double>(correct) / static_cast<double>(predictions.size());
    }
    case MetricKind::kMacroF1: {
      double total = 0.0;
      for (std::size_t j = 0; j < m; ++j) total += f1_of_label(predictions, golds, j);
      return total / static_cast<double>(m);
    }
    case MetricKind::kF1OfLabel:
      return f1_of_label(predictions, golds, metric.label);
  }
  return 0.0;
}

}  // namespace lampo
