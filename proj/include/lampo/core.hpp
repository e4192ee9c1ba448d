#pragma once

// Ordinal label spaces, demonstrations and pairwise scoring.

#include <algorithm>
#include <cctype>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lampo/error.hpp"

namespace lampo {

// Labels in ordinal order; index j is the integer value of label j.
class OrderedLabelSpace {
 public:
  OrderedLabelSpace() = default;

  explicit OrderedLabelSpace(std::vector<std::string> labels)
      : labels_(std::move(labels)) {
    if (labels_.size() < 2) {
      throw ValidationError("label space needs at least 2 labels");
    }
    std::set<std::string> seen;
    for (const auto& label : labels_) {
      if (!seen.insert(label).second) {
        throw ValidationError("duplicate label '" + label + "'");
      }
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& operator[](std::size_t index) const { return labels_.at(index); }

  bool operator==(const OrderedLabelSpace&) const = default;

 private:
  std::vector<std::string> labels_;
};

inline std::size_t label_index(std::string_view label, const OrderedLabelSpace& space) {
  const auto& labels = space.labels();
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] == label) return j;
  }
  throw ValidationError("unknown label '" + std::string(label) + "'");
}

struct Demonstration {
  std::string text;
  std::size_t label = 0;
  std::optional<std::string> aspect;
};

class DemonstrationSet {
 public:
  DemonstrationSet(std::vector<Demonstration> items, OrderedLabelSpace space,
                   std::optional<std::size_t> shots_per_class = std::nullopt)
      : items_(std::move(items)),
        space_(std::move(space)),
        shots_per_class_(shots_per_class) {
    if (items_.empty()) throw ValidationError("demonstration set is empty");
    std::vector<std::size_t> per_class(space_.size(), 0);
    for (const auto& demo : items_) {
      if (demo.text.empty()) throw ValidationError("demonstration text is empty");
      if (demo.label >= space_.size()) {
        throw ValidationError("demonstration label index " +
                              std::to_string(demo.label) + " out of range");
      }
      ++per_class[demo.label];
    }
    if (shots_per_class_) {
      for (std::size_t j = 0; j < per_class.size(); ++j) {
        if (per_class[j] != *shots_per_class_) {
          throw ValidationError("class '" + space_[j] + "' has " +
                                std::to_string(per_class[j]) + " demonstrations, expected " +
                                std::to_string(*shots_per_class_));
        }
      }
    }
  }

  const std::vector<Demonstration>& items() const noexcept { return items_; }
  const OrderedLabelSpace& label_space() const noexcept { return space_; }
  std::optional<std::size_t> shots_per_class() const noexcept { return shots_per_class_; }
  std::size_t size() const noexcept { return items_.size(); }

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out;
    out.reserve(items_.size());
    for (const auto& demo : items_) out.push_back(demo.label);
    return out;
  }

 private:
  std::vector<Demonstration> items_;
  OrderedLabelSpace space_;
  std::optional<std::size_t> shots_per_class_;
};

// An input to classify. The aspect is only used by aspect-based tasks.
struct TextItem {
  std::string text;
  std::optional<std::string> aspect;
};

// Debiased three-valued comparison result F(x, x_i).
enum class ComparisonOutcome : int { kLoss = -1, kTie = 0, kWin = 1 };

inline int to_int(ComparisonOutcome outcome) { return static_cast<int>(outcome); }

inline ComparisonOutcome operator-(ComparisonOutcome outcome) {
  return static_cast<ComparisonOutcome>(-to_int(outcome));
}

inline std::int64_t local_score(ComparisonOutcome outcome, std::size_t demo_label_index) {
  return static_cast<std::int64_t>(demo_label_index) + to_int(outcome);
}

// Range every score S(x) must fall into: [sum l(y_i) - |C|, sum l(y_i) + |C|].
struct ScoreRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

inline ScoreRange attainable_score_range(std::span<const std::size_t> demo_labels) {
  std::int64_t total = 0;
  for (auto label : demo_labels) total += static_cast<std::int64_t>(label);
  const auto count = static_cast<std::int64_t>(demo_labels.size());
  return {total - count, total + count};
}

// Anything that answers F(x, demo) for a demonstration.
template <typename Oracle>
concept DemonstrationComparator = requires(Oracle& oracle, const TextItem& item,
                                           const Demonstration& demo) {
  { oracle(item, demo) } -> std::convertible_to<ComparisonOutcome>;
};

// S(x): sum of local scores against every demonstration.
template <DemonstrationComparator Oracle>
std::int64_t score_instance(const TextItem& item, const DemonstrationSet& demos,
                            Oracle&& oracle) {
  std::int64_t score = 0;
  for (const auto& demo : demos.items()) {
    score += local_score(oracle(item, demo), demo.label);
  }
  return score;
}

// Fold of precomputed outcomes, one per demonstration (same order as demos).
inline std::int64_t score_from_outcomes(std::span<const ComparisonOutcome> outcomes,
                                        const DemonstrationSet& demos) {
  if (outcomes.size() != demos.size()) {
    throw ValidationError("outcome count does not match demonstration count");
  }
  std::int64_t score = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    score += local_score(outcomes[i], demos.items()[i].label);
  }
  return score;
}

}  // namespace lampo
