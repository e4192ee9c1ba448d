#pragma once

// Turning integer scores into ordinal labels: expected (prior) thresholds,
// entropy-maximizing self-supervised thresholds over a probing set, their
// mixture, and the decision rule.

#include <algorithm>
#include <boost/rational.hpp>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lampo/core.hpp"
#include "lampo/error.hpp"

namespace lampo {

using Rational = boost::rational<std::int64_t>;

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

// "20.5", "10", or "41/3" when there is no short decimal form.
inline std::string to_string(const Rational& r) {
  auto den = r.denominator();
  int twos = 0, fives = 0;
  while (den % 2 == 0) { den /= 2; ++twos; }
  while (den % 5 == 0) { den /= 5; ++fives; }
  if (den != 1) return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
  if (r.denominator() == 1) return std::to_string(r.numerator());
  const int digits = std::max(twos, fives);
  std::int64_t scale = 1;
  for (int i = 0; i < digits; ++i) scale *= 10;
  const auto scaled = r.numerator() * (scale / r.denominator());
  const auto whole = scaled / scale;
  auto frac = std::to_string(std::abs(scaled % scale));
  frac.insert(0, static_cast<std::size_t>(digits) - frac.size(), '0');
  const std::string sign = (scaled < 0 && whole == 0) ? "-" : "";
  return sign + std::to_string(whole) + "." + frac;
}

// m-1 strictly increasing cut points.
class Thresholds {
 public:
  Thresholds() = default;

  explicit Thresholds(std::vector<Rational> cuts) : cuts_(std::move(cuts)) {
    for (std::size_t j = 1; j < cuts_.size(); ++j) {
      if (!(cuts_[j - 1] < cuts_[j])) {
        throw CalibrationError("thresholds must be strictly increasing (T" + std::to_string(j) +
                               " = " + to_string(cuts_[j - 1]) + ", T" + std::to_string(j + 1) +
                               " = " + to_string(cuts_[j]) + ")");
      }
    }
  }

  static Thresholds from_integers(std::span<const std::int64_t> values) {
    return Thresholds(std::vector<Rational>(values.begin(), values.end()));
  }

  const std::vector<Rational>& cuts() const noexcept { return cuts_; }
  std::size_t size() const noexcept { return cuts_.size(); }
  const Rational& operator[](std::size_t j) const { return cuts_.at(j); }

  bool operator==(const Thresholds&) const = default;

 private:
  std::vector<Rational> cuts_;
};

// S_j for j = 0..m-1, the score a class-j item gets when every comparison is
// decided by label order.
inline std::vector<std::int64_t> expected_scores(std::span<const std::size_t> demo_labels,
                                                 std::size_t m) {
  if (demo_labels.empty()) throw CalibrationError("expected scores need at least one demonstration");
  for (auto label : demo_labels) {
    if (label >= m) throw ValidationError("demonstration label " + std::to_string(label) + " >= m");
  }
  std::vector<std::int64_t> scores(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    for (auto label : demo_labels) {
      const auto l = static_cast<std::int64_t>(label);
      if (label < j) scores[j] += l + 1;
      else if (label == j) scores[j] += l;
      else scores[j] += l - 1;
    }
  }
  return scores;
}

inline Thresholds expected_thresholds(std::span<const std::size_t> demo_labels, std::size_t m) {
  const auto scores = expected_scores(demo_labels, m);
  std::vector<Rational> cuts;
  cuts.reserve(m - 1);
  for (std::size_t j = 1; j < m; ++j) {
    if (scores[j] <= scores[j - 1]) {
      throw CalibrationError("expected scores are not increasing between classes " +
                             std::to_string(j - 1) + " and " + std::to_string(j) + " (" +
                             std::to_string(scores[j - 1]) + " vs " + std::to_string(scores[j]) +
                             "); the demonstration set is too unbalanced");
    }
    cuts.emplace_back(scores[j] + scores[j - 1], 2);
  }
  return Thresholds(std::move(cuts));
}

// Largest j with score >= T_j, or 0 below T_1.
inline std::size_t decide(std::int64_t score, const Thresholds& thresholds) {
  std::size_t label = 0;
  for (const auto& cut : thresholds.cuts()) {
    if (score >= cut) ++label;
    else break;
  }
  return label;
}

inline std::size_t decide(std::int64_t score, const Thresholds& thresholds,
                          const OrderedLabelSpace& space) {
  if (thresholds.size() + 1 != space.size()) {
    throw ValidationError("need " + std::to_string(space.size() - 1) + " thresholds, got " +
                          std::to_string(thresholds.size()));
  }
  return decide(score, thresholds);
}

inline std::vector<std::size_t> decide_all(std::span<const std::int64_t> scores,
                                           const Thresholds& thresholds) {
  std::vector<std::size_t> out;
  out.reserve(scores.size());
  for (auto s : scores) out.push_back(decide(s, thresholds));
  return out;
}

// Natural-log entropy of a count histogram. Counts are summed in sorted order
// so equal multisets give bit-identical results.
inline double entropy_from_counts(std::vector<std::size_t> counts) {
  std::sort(counts.begin(), counts.end());
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

inline double label_entropy(std::span<const std::size_t> predictions, std::size_t m) {
  std::vector<std::size_t> counts(m, 0);
  for (auto p : predictions) {
    if (p >= m) throw ValidationError("prediction " + std::to_string(p) + " >= m");
    ++counts[p];
  }
  return entropy_from_counts(std::move(counts));
}

enum class TieBreak {
  kNearestPriorThenLexicographic,  // L1 distance to expected thresholds, then lexicographic
  kLexicographic,
};

struct SearchConfig {
  // Integer half-width around each expected threshold; nullopt means |C|.
  std::optional<std::int64_t> window;
  // Search the whole attainable score range instead of windows.
  bool unwindowed = false;
  TieBreak tie_break = TieBreak::kNearestPriorThenLexicographic;
};

struct CalibrationResult {
  Thresholds thresholds;
  double entropy = 0.0;
  std::uint64_t candidates = 0;
  std::size_t tied_candidates = 0;  // candidates sharing the best entropy
  bool tie_break_applied = false;
};

// Exhaustive search over strictly increasing integer cut tuples near the
// expected thresholds, maximizing the label entropy of the probing predictions.
inline CalibrationResult search_self_supervised_thresholds(std::span<const std::int64_t> probing_scores,
                                                           std::span<const std::size_t> demo_labels,
                                                           std::size_t m, const SearchConfig& cfg = {}) {
  if (probing_scores.empty()) {
    throw CalibrationError("probing set is empty; fall back to expected thresholds");
  }
  const auto prior = expected_thresholds(demo_labels, m);
  const auto range = attainable_score_range(demo_labels);
  const auto window = cfg.window.value_or(static_cast<std::int64_t>(demo_labels.size()));
  if (window < 0) throw ConfigError("threshold search window must be >= 0");

  std::vector<std::int64_t> lo(m - 1), hi(m - 1);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    if (cfg.unwindowed) {
      lo[j] = range.lo;
      hi[j] = range.hi;
    } else {
      const auto& t = prior[j];
      // ceil / floor of t -/+ window for a rational t with positive denominator.
      const auto floor_t = t.numerator() >= 0 ? t.numerator() / t.denominator()
                                              : -((-t.numerator() + t.denominator() - 1) / t.denominator());
      const auto ceil_t = floor_t + (t.denominator() == 1 ? 0 : 1);
      lo[j] = std::max(range.lo, ceil_t - window);
      hi[j] = std::min(range.hi, floor_t + window);
    }
  }

  // below[v - base] = number of probing scores < v.
  std::vector<std::int64_t> sorted(probing_scores.begin(), probing_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto base = std::min(range.lo, sorted.front());
  const auto top = std::max(range.hi, sorted.back()) + 1;
  std::vector<std::size_t> below(static_cast<std::size_t>(top - base + 1));
  for (std::int64_t v = base; v <= top; ++v) {
    below[static_cast<std::size_t>(v - base)] = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
  }
  const auto count_below = [&](std::int64_t v) { return below[static_cast<std::size_t>(v - base)]; };

  CalibrationResult best;
  std::optional<std::vector<std::int64_t>> best_cuts;
  Rational best_distance;
  std::vector<std::int64_t> cuts(m - 1);
  std::vector<std::size_t> counts(m);

  const auto distance_to_prior = [&](const std::vector<std::int64_t>& c) {
    Rational d = 0;
    for (std::size_t j = 0; j < c.size(); ++j) d += boost::abs(Rational(c[j]) - prior[j]);
    return d;
  };

  const auto evaluate = [&] {
    ++best.candidates;
    std::size_t prev = 0;
    for (std::size_t j = 0; j + 1 < m; ++j) {
      const auto b = count_below(cuts[j]);
      counts[j] = b - prev;
      prev = b;
    }
    counts[m - 1] = sorted.size() - prev;
    const double h = entropy_from_counts(counts);
    if (!best_cuts || h > best.entropy) {
      best.entropy = h;
      best_cuts = cuts;
      best_distance = distance_to_prior(cuts);
      best.tied_candidates = 1;
      return;
    }
    if (h < best.entropy) return;
    ++best.tied_candidates;
    // Enumeration is lexicographic, so an earlier tuple wins any remaining tie.
    if (cfg.tie_break == TieBreak::kNearestPriorThenLexicographic) {
      const auto d = distance_to_prior(cuts);
      if (d < best_distance) {
        best_distance = d;
        best_cuts = cuts;
      }
    }
  };

  const auto recurse = [&](auto&& self, std::size_t j) -> void {
    if (j + 1 == m) {
      evaluate();
      return;
    }
    const auto start = j == 0 ? lo[0] : std::max(lo[j], cuts[j - 1] + 1);
    for (auto v = start; v <= hi[j]; ++v) {
      cuts[j] = v;
      self(self, j + 1);
    }
  };
  recurse(recurse, 0);

  if (!best_cuts) {
    throw CalibrationError("no strictly increasing threshold tuple fits the search window");
  }
  best.thresholds = Thresholds::from_integers(*best_cuts);
  best.tie_break_applied = best.tied_candidates > 1;
  return best;
}

inline Thresholds mixture_thresholds(const Thresholds& expected, const Thresholds& self_supervised) {
  if (expected.size() != self_supervised.size()) {
    throw ValidationError("cannot mix thresholds of different lengths (" +
                          std::to_string(expected.size()) + " vs " +
                          std::to_string(self_supervised.size()) + ")");
  }
  std::vector<Rational> cuts;
  cuts.reserve(expected.size());
  for (std::size_t j = 0; j < expected.size(); ++j) {
    cuts.push_back((expected[j] + self_supervised[j]) / Rational(2));
  }
  return Thresholds(std::move(cuts));
}

}  // namespace lampo
